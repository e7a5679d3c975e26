// SPDX-License-Identifier: Apache-2.0

//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records each operation with its output value. [`Tape::backward`]
//! walks the record in reverse and accumulates gradients for every node that
//! influences the scalar loss.

use std::rc::Rc;

use ndarray::{s, Array2, Axis};

pub type Mat = Array2<f64>;

/// Handle to a value on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(&self) -> usize {
        self.0
    }
}

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Transpose(Var),
    Tanh(Var),
    Gelu(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Rc<Vec<usize>>),
    NeighborSum(Var, Rc<Vec<Vec<usize>>>),
    MeanRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    CausalAttention {
        q: Var,
        k: Var,
        v: Var,
        scale: f64,
        probs: Mat,
    },
    CrossEntropy {
        logits: Var,
        targets: Rc<Vec<Option<usize>>>,
        probs: Mat,
        count: usize,
    },
}

#[derive(Default)]
pub struct Tape {
    vals: Vec<Mat>,
    ops: Vec<Op>,
}

/// Gradients indexed by [`Var`].
pub struct Grads {
    g: Vec<Option<Mat>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.g.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of `shape` when `v` did not reach the loss.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Mat {
        self.get(v).cloned().unwrap_or_else(|| Mat::zeros(shape))
    }
}

fn softmax_rows(z: &Mat) -> Mat {
    let mut p = z.clone();
    for mut row in p.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - m).exp());
        let s = row.sum();
        row.mapv_inplace(|x| x / s);
    }
    p
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    fn push(&mut self, val: Mat, op: Op) -> Var {
        self.vals.push(val);
        self.ops.push(op);
        Var(self.vals.len() - 1)
    }

    pub fn leaf(&mut self, m: Mat) -> Var {
        self.push(m, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.vals[v.0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.vals[v.0].dim()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.vals[a.0].dot(&self.vals[b.0]);
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = &self.vals[a.0] + &self.vals[b.0];
        self.push(out, Op::Add(a, b))
    }

    /// `a + row`, broadcasting a `1 x m` row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.vals[row.0].nrows(), 1, "add_row expects a single row");
        let out = &self.vals[a.0] + &self.vals[row.0];
        self.push(out, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = &self.vals[a.0] * s;
        self.push(out, Op::Scale(a, s))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.vals[a.0].t().to_owned();
        self.push(out, Op::Transpose(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.vals[a.0].mapv(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out =
            self.vals[a.0].mapv(|x| 0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh()));
        self.push(out, Op::Gelu(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let out = self.vals[a.0].slice(s![.., start..start + len]).to_owned();
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.vals[p.0].view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.vals[p.0].view()).collect();
        let out = ndarray::concatenate(Axis(0), &views).expect("column counts agree");
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    /// Row `r` of the output is row `idx[r]` of `a`.
    pub fn gather_rows(&mut self, a: Var, idx: Rc<Vec<usize>>) -> Var {
        let src = &self.vals[a.0];
        let mut out = Mat::zeros((idx.len(), src.ncols()));
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).assign(&src.row(i));
        }
        self.push(out, Op::GatherRows(a, idx))
    }

    /// Row `i` of the output is the sum of rows `nbrs[i]` of `a`.
    pub fn neighbor_sum(&mut self, a: Var, nbrs: Rc<Vec<Vec<usize>>>) -> Var {
        let src = &self.vals[a.0];
        let mut out = Mat::zeros((nbrs.len(), src.ncols()));
        for (i, list) in nbrs.iter().enumerate() {
            let mut row = out.row_mut(i);
            for &j in list {
                row += &src.row(j);
            }
        }
        self.push(out, Op::NeighborSum(a, nbrs))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let out = self.vals[a.0]
            .mean_axis(Axis(0))
            .expect("non-empty")
            .insert_axis(Axis(0));
        self.push(out, Op::MeanRows(a))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = &self.vals[x.0];
        let n = xv.ncols() as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mu = row.sum() / n;
            let var = row.fold(0.0, |a, &b| a + (b - mu) * (b - mu)) / n;
            let is = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| (v - mu) * is);
            inv_std.push(is);
        }
        let out = &xhat * &self.vals[gamma.0] + &self.vals[beta.0];
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    /// Single-head causal attention: row `t` attends to rows `0..=t` only.
    pub fn causal_attention(&mut self, q: Var, k: Var, v: Var, scale: f64) -> Var {
        let (qv, kv, vv) = (&self.vals[q.0], &self.vals[k.0], &self.vals[v.0]);
        let t = qv.nrows();
        let mut probs = Mat::zeros((t, t));
        let mut out = Mat::zeros((t, vv.ncols()));
        for i in 0..t {
            let qi = qv.row(i);
            let mut m = f64::NEG_INFINITY;
            for j in 0..=i {
                let sc = qi.dot(&kv.row(j)) * scale;
                probs[[i, j]] = sc;
                m = m.max(sc);
            }
            let mut sum = 0.0;
            for j in 0..=i {
                let e = (probs[[i, j]] - m).exp();
                probs[[i, j]] = e;
                sum += e;
            }
            let mut orow = out.row_mut(i);
            for j in 0..=i {
                probs[[i, j]] /= sum;
                orow.scaled_add(probs[[i, j]], &vv.row(j));
            }
        }
        self.push(
            out,
            Op::CausalAttention {
                q,
                k,
                v,
                scale,
                probs,
            },
        )
    }

    /// Mean softmax cross-entropy over rows with a target; returns `1 x 1`.
    ///
    /// Panics if no row has a target; callers check this first.
    pub fn cross_entropy(&mut self, logits: Var, targets: Rc<Vec<Option<usize>>>) -> Var {
        let z = &self.vals[logits.0];
        assert_eq!(z.nrows(), targets.len());
        let count = targets.iter().filter(|t| t.is_some()).count();
        assert!(count > 0, "cross_entropy needs at least one target");
        let probs = softmax_rows(z);
        let mut loss = 0.0;
        for (r, t) in targets.iter().enumerate() {
            if let Some(c) = t {
                // log-sum-exp form keeps large margins finite
                let row = z.row(r);
                let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let lse = m + row.fold(0.0, |a, &b| a + (b - m).exp()).ln();
                loss += lse - row[*c];
            }
        }
        let out = Mat::from_elem((1, 1), loss / count as f64);
        self.push(
            out,
            Op::CrossEntropy {
                logits,
                targets,
                probs,
                count,
            },
        )
    }

    /// Gradients of the scalar `loss` with respect to every recorded value.
    pub fn backward(&self, loss: Var) -> Grads {
        assert_eq!(self.vals[loss.0].dim(), (1, 1), "loss must be a scalar");
        let mut g: Vec<Option<Mat>> = (0..self.vals.len()).map(|_| None).collect();
        g[loss.0] = Some(Mat::ones((1, 1)));
        let acc = |g: &mut Vec<Option<Mat>>, v: Var, d: Mat| match &mut g[v.0] {
            Some(existing) => *existing += &d,
            slot @ None => *slot = Some(d),
        };
        for i in (0..=loss.0).rev() {
            let Some(dy) = g[i].take() else { continue };
            match &self.ops[i] {
                Op::Leaf => {
                    g[i] = Some(dy);
                    continue;
                }
                Op::MatMul(a, b) => {
                    acc(&mut g, *a, dy.dot(&self.vals[b.0].t()));
                    acc(&mut g, *b, self.vals[a.0].t().dot(&dy));
                }
                Op::Add(a, b) => {
                    acc(&mut g, *a, dy.clone());
                    acc(&mut g, *b, dy.clone());
                }
                Op::AddRow(a, row) => {
                    acc(&mut g, *row, dy.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut g, *a, dy.clone());
                }
                Op::Scale(a, s) => acc(&mut g, *a, &dy * *s),
                Op::Transpose(a) => acc(&mut g, *a, dy.t().to_owned()),
                Op::Tanh(a) => {
                    let y = &self.vals[i];
                    acc(&mut g, *a, &dy * &y.mapv(|t| 1.0 - t * t));
                }
                Op::Gelu(a) => {
                    let d = self.vals[a.0].mapv(|x| {
                        let u = GELU_C * (x + GELU_K * x * x * x);
                        let t = u.tanh();
                        0.5 * (1.0 + t)
                            + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
                    });
                    acc(&mut g, *a, &dy * &d);
                }
                Op::SliceCols(a, start) => {
                    let mut d = Mat::zeros(self.vals[a.0].dim());
                    d.slice_mut(s![.., *start..*start + dy.ncols()]).assign(&dy);
                    acc(&mut g, *a, d);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let w = self.vals[p.0].ncols();
                        acc(&mut g, *p, dy.slice(s![.., off..off + w]).to_owned());
                        off += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let h = self.vals[p.0].nrows();
                        acc(&mut g, *p, dy.slice(s![off..off + h, ..]).to_owned());
                        off += h;
                    }
                }
                Op::GatherRows(a, idx) => {
                    let mut d = Mat::zeros(self.vals[a.0].dim());
                    for (r, &src) in idx.iter().enumerate() {
                        let mut row = d.row_mut(src);
                        row += &dy.row(r);
                    }
                    acc(&mut g, *a, d);
                }
                Op::NeighborSum(a, nbrs) => {
                    let mut d = Mat::zeros(self.vals[a.0].dim());
                    for (r, list) in nbrs.iter().enumerate() {
                        for &j in list {
                            let mut row = d.row_mut(j);
                            row += &dy.row(r);
                        }
                    }
                    acc(&mut g, *a, d);
                }
                Op::MeanRows(a) => {
                    let (n, m) = self.vals[a.0].dim();
                    let d = Mat::from_shape_fn((n, m), |(_, c)| dy[[0, c]] / n as f64);
                    acc(&mut g, *a, d);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    acc(&mut g, *beta, dy.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(
                        &mut g,
                        *gamma,
                        (&dy * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)),
                    );
                    let dxhat = &dy * &self.vals[gamma.0];
                    let n = xhat.ncols() as f64;
                    let mut dx = Mat::zeros(xhat.dim());
                    for r in 0..xhat.nrows() {
                        let dh = dxhat.row(r);
                        let xh = xhat.row(r);
                        let sum_dh = dh.sum();
                        let sum_dh_xh = dh.dot(&xh);
                        let mut out = dx.row_mut(r);
                        for c in 0..xhat.ncols() {
                            out[c] = inv_std[r] / n * (n * dh[c] - sum_dh - xh[c] * sum_dh_xh);
                        }
                    }
                    acc(&mut g, *x, dx);
                }
                Op::CausalAttention {
                    q,
                    k,
                    v,
                    scale,
                    probs,
                } => {
                    let (qv, kv, vv) = (&self.vals[q.0], &self.vals[k.0], &self.vals[v.0]);
                    let t = qv.nrows();
                    let dv = probs.t().dot(&dy);
                    let mut dq = Mat::zeros(qv.dim());
                    let mut dk = Mat::zeros(kv.dim());
                    for r in 0..t {
                        let dyr = dy.row(r);
                        let mut dp = vec![0.0; r + 1];
                        let mut dot = 0.0;
                        for (j, dpj) in dp.iter_mut().enumerate() {
                            *dpj = dyr.dot(&vv.row(j));
                            dot += *dpj * probs[[r, j]];
                        }
                        for (j, dpj) in dp.iter().enumerate() {
                            let ds = probs[[r, j]] * (dpj - dot) * scale;
                            if ds != 0.0 {
                                dq.row_mut(r).scaled_add(ds, &kv.row(j));
                                dk.row_mut(j).scaled_add(ds, &qv.row(r));
                            }
                        }
                    }
                    acc(&mut g, *q, dq);
                    acc(&mut g, *k, dk);
                    acc(&mut g, *v, dv);
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                    count,
                } => {
                    let scale = dy[[0, 0]] / *count as f64;
                    let mut d = Mat::zeros(probs.dim());
                    for (r, t) in targets.iter().enumerate() {
                        if let Some(c) = t {
                            let mut row = d.row_mut(r);
                            row.assign(&probs.row(r));
                            row[*c] -= 1.0;
                            row *= scale;
                        }
                    }
                    acc(&mut g, *logits, d);
                }
            }
        }
        Grads { g }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_shape_fn((r, c), |_| rng.gen_range(-1.0..1.0))
    }

    /// Checks d(sum(W .* f(inputs)))/d(inputs) against central differences.
    fn check<F>(inputs: Vec<Mat>, f: F)
    where
        F: Fn(&mut Tape, &[Var]) -> Var,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let probe = {
            let mut t = Tape::new();
            let vars: Vec<Var> = inputs.iter().map(|m| t.leaf(m.clone())).collect();
            let out = f(&mut t, &vars);
            let (r, c) = t.shape(out);
            rand_mat(&mut rng, r, c)
        };
        let scalar = |ins: &[Mat]| -> (f64, Grads, Vec<Var>) {
            let mut t = Tape::new();
            let vars: Vec<Var> = ins.iter().map(|m| t.leaf(m.clone())).collect();
            let out = f(&mut t, &vars);
            let w = t.leaf(probe.clone());
            let prod = {
                let (r, c) = t.shape(out);
                let ones_r = t.leaf(Mat::ones((1, r)));
                let ones_c = t.leaf(Mat::ones((c, 1)));
                let masked = elementwise(&mut t, out, w);
                let rs = t.matmul(ones_r, masked);
                t.matmul(rs, ones_c)
            };
            let val = t.value(prod)[[0, 0]];
            let g = t.backward(prod);
            (val, g, vars)
        };
        let (_, grads, vars) = scalar(&inputs);
        let h = 1e-5;
        for (k, m) in inputs.iter().enumerate() {
            let analytic = grads.get_or_zeros(vars[k], m.dim());
            for idx in 0..m.len() {
                let (r, c) = (idx / m.ncols(), idx % m.ncols());
                let mut plus = inputs.clone();
                plus[k][[r, c]] += h;
                let mut minus = inputs.clone();
                minus[k][[r, c]] -= h;
                let fd = (scalar(&plus).0 - scalar(&minus).0) / (2.0 * h);
                let a = analytic[[r, c]];
                let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                assert!(err < 1e-5, "input {k} [{r},{c}]: analytic {a} fd {fd}");
            }
        }
    }

    /// `a .* w` for a constant `w`, built row by row from diagonal matmuls.
    fn elementwise(t: &mut Tape, a: Var, w: Var) -> Var {
        let rows: Vec<Var> = (0..t.shape(a).0)
            .map(|i| {
                let ai = t.gather_rows(a, Rc::new(vec![i]));
                let diag = t.leaf(Mat::from_diag(&t.value(w).row(i).to_owned()));
                t.matmul(ai, diag)
            })
            .collect();
        t.concat_rows(&rows)
    }

    #[test]
    fn matmul_add_tanh_gelu() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = rand_mat(&mut rng, 3, 4);
        let b = rand_mat(&mut rng, 4, 2);
        let bias = rand_mat(&mut rng, 1, 2);
        check(vec![a, b, bias], |t, v| {
            let m = t.matmul(v[0], v[1]);
            let m = t.add_row(m, v[2]);
            let x = t.tanh(m);
            let y = t.gelu(m);
            let z = t.add(x, y);
            let zt = t.transpose(z);
            let back = t.transpose(zt);
            t.scale(back, 0.7)
        });
    }

    #[test]
    fn structural_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = rand_mat(&mut rng, 4, 5);
        let b = rand_mat(&mut rng, 2, 5);
        check(vec![a, b], |t, v| {
            let s = t.slice_cols(v[0], 1, 3);
            let s2 = t.slice_cols(v[1], 0, 2);
            let r = t.concat_rows(&[v[0], v[1]]);
            let g = t.gather_rows(r, Rc::new(vec![5, 0, 0, 2]));
            let sg = t.slice_cols(g, 0, 3);
            let n = t.neighbor_sum(s, Rc::new(vec![vec![1, 2], vec![], vec![0, 0, 3], vec![3]]));
            let c = t.concat_cols(&[n, sg]);
            let m = t.mean_rows(c);
            let m2 = t.mean_rows(s2);
            let m2 = t.concat_cols(&[m2, m2, m2]);
            t.add(m, m2)
        });
    }

    #[test]
    fn layer_norm_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = rand_mat(&mut rng, 3, 6);
        let g = rand_mat(&mut rng, 1, 6);
        let b = rand_mat(&mut rng, 1, 6);
        check(vec![x, g, b], |t, v| t.layer_norm(v[0], v[1], v[2]));
    }

    #[test]
    fn attention_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = rand_mat(&mut rng, 4, 3);
        let k = rand_mat(&mut rng, 4, 3);
        let v = rand_mat(&mut rng, 4, 2);
        check(vec![q, k, v], |t, x| {
            t.causal_attention(x[0], x[1], x[2], 0.6)
        });
    }

    #[test]
    fn cross_entropy_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = rand_mat(&mut rng, 4, 5);
        let targets = Rc::new(vec![Some(1), None, Some(4), Some(0)]);
        check(vec![z], move |t, v| t.cross_entropy(v[0], targets.clone()));
    }

    #[test]
    fn cross_entropy_values() {
        let mut t = Tape::new();
        let z = t.leaf(Mat::zeros((2, 260)));
        let l = t.cross_entropy(z, Rc::new(vec![Some(3), Some(7)]));
        assert!((t.value(l)[[0, 0]] - 260f64.ln()).abs() < 1e-12);
        let mut big = Mat::zeros((1, 5));
        big[[0, 2]] = 1e4;
        let z = t.leaf(big);
        let l = t.cross_entropy(z, Rc::new(vec![Some(2)]));
        assert!(t.value(l)[[0, 0]].abs() < 1e-12);
    }

    #[test]
    fn attention_is_causal_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let q = rand_mat(&mut rng, 5, 4);
        let k = rand_mat(&mut rng, 5, 4);
        let v = rand_mat(&mut rng, 5, 4);
        let run = |k: &Mat, v: &Mat| {
            let mut t = Tape::new();
            let (a, b, c) = (t.leaf(q.clone()), t.leaf(k.clone()), t.leaf(v.clone()));
            let o = t.causal_attention(a, b, c, 0.5);
            t.value(o).clone()
        };
        let base = run(&k, &v);
        let (mut k2, mut v2) = (k.clone(), v.clone());
        k2.row_mut(4).fill(9.0);
        v2.row_mut(4).fill(-9.0);
        let pert = run(&k2, &v2);
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(base[[r, c]].to_bits(), pert[[r, c]].to_bits());
            }
        }
    }
}
