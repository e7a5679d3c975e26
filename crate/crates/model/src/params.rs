// SPDX-License-Identifier: Apache-2.0

//! Named parameter sets, seeded initialisation, hashing, checkpoints and Adam.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{ModelError, Result};
use crate::tape::{Grads, Mat, Tape, Var};

/// A fixed, ordered collection of named tensors.
///
/// `names`, `tensors` and `tensors_mut` must enumerate in the same order.
pub trait Parameters: Clone {
    fn names(&self) -> Vec<String>;
    fn tensors(&self) -> Vec<&Mat>;
    fn tensors_mut(&mut self) -> Vec<&mut Mat>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Places every tensor on the tape as a leaf, in enumeration order.
    fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors()
            .into_iter()
            .map(|t| tape.leaf(t.clone()))
            .collect()
    }

    /// Gradient with the same layout as `self`; unreached tensors get zeros.
    fn grads_from(&self, vars: &[Var], grads: &Grads) -> Self {
        let mut out = self.clone();
        for (t, v) in out.tensors_mut().into_iter().zip(vars) {
            *t = grads.get_or_zeros(*v, t.dim());
        }
        out
    }

    fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.fill(0.0);
        }
        out
    }

    fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }
}

impl<A: Parameters, B: Parameters> Parameters for (A, B) {
    fn names(&self) -> Vec<String> {
        let mut n = self.0.names();
        n.extend(self.1.names());
        n
    }

    fn tensors(&self) -> Vec<&Mat> {
        let mut t = self.0.tensors();
        t.extend(self.1.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut t = self.0.tensors_mut();
        t.extend(self.1.tensors_mut());
        t
    }
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Mat {
    Mat::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..=bound))
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SHA-256 over names, shapes and the exact bit patterns of every entry.
pub fn param_hash<P: Parameters>(p: &P) -> String {
    let mut h = Sha256::new();
    for (name, t) in p.names().iter().zip(p.tensors()) {
        h.update(name.as_bytes());
        h.update((t.nrows() as u64).to_le_bytes());
        h.update((t.ncols() as u64).to_le_bytes());
        for x in t.iter() {
            h.update(x.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

pub fn global_norm<P: Parameters>(g: &P) -> f64 {
    g.tensors()
        .iter()
        .map(|t| t.iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

const MAGIC: &str = "NRCKPT 1";

/// Serialises tensors as text:
///
/// ```text
/// NRCKPT 1
/// tensor <name> <rows> <cols>
/// <row values, space separated, shortest round-trip form>
/// ```
pub fn to_checkpoint_text<P: Parameters>(p: &P) -> String {
    let mut out = String::from(MAGIC);
    out.push('\n');
    for (name, t) in p.names().iter().zip(p.tensors()) {
        writeln!(out, "tensor {} {} {}", name, t.nrows(), t.ncols()).unwrap();
        for row in t.rows() {
            let line: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    out
}

/// Loads tensors into `template`, which fixes the expected names and shapes.
pub fn from_checkpoint_text<P: Parameters>(text: &str, template: &P) -> Result<P> {
    let bad = |msg: String| ModelError::Checkpoint(msg);
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad("missing NRCKPT 1 header".into()));
    }
    let mut out = template.clone();
    let names = template.names();
    for (name, t) in names.iter().zip(out.tensors_mut()) {
        let header = lines
            .next()
            .ok_or_else(|| bad(format!("missing tensor {name}")))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let shape_ok = fields.len() == 4
            && fields[0] == "tensor"
            && fields[1] == name
            && fields[2].parse::<usize>().ok() == Some(t.nrows())
            && fields[3].parse::<usize>().ok() == Some(t.ncols());
        if !shape_ok {
            return Err(ModelError::ShapeMismatch(format!(
                "checkpoint entry `{header}` does not match {name} {}x{}",
                t.nrows(),
                t.ncols()
            )));
        }
        for r in 0..t.nrows() {
            let line = lines
                .next()
                .ok_or_else(|| bad(format!("{name}: truncated")))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(format!("{name}: {e}")))?;
            if vals.len() != t.ncols() {
                return Err(bad(format!("{name}: row {r} has {} values", vals.len())));
            }
            for (c, v) in vals.into_iter().enumerate() {
                t[[r, c]] = v;
            }
        }
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(bad("trailing data after last tensor".into()));
    }
    Ok(out)
}

/// Writes `contents` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.persist(path).map_err(|e| ModelError::Io(e.error))?;
    Ok(())
}

pub fn save_checkpoint<P: Parameters>(p: &P, path: &Path) -> Result<()> {
    write_atomic(path, to_checkpoint_text(p).as_bytes())
}

pub fn load_checkpoint<P: Parameters>(path: &Path, template: &P) -> Result<P> {
    from_checkpoint_text(&std::fs::read_to_string(path)?, template)
}

/// Adam with optional global-norm gradient clipping.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: Option<f64>,
    t: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(1.0),
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) {
        if self.m.is_empty() {
            self.m = grads
                .tensors()
                .iter()
                .map(|g| Mat::zeros(g.dim()))
                .collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let scale = match self.clip_norm {
            Some(c) => {
                let n = global_norm(grads);
                if n > c {
                    c / n
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    let g = g * scale;
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    if lr != 0.0 {
                        *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                    }
                });
        }
    }
}

/// Largest relative error between analytic and central-difference gradients.
///
/// `loss` is evaluated with perturbed copies of `params`; every entry of every
/// tensor is checked unless `max_per_tensor` limits it to an evenly spaced
/// subset.
pub fn finite_difference_error<P, F>(
    params: &P,
    analytic: &P,
    step: f64,
    max_per_tensor: Option<usize>,
    loss: F,
) -> f64
where
    P: Parameters,
    F: Fn(&P) -> f64,
{
    let mut worst: f64 = 0.0;
    let n_tensors = params.tensors().len();
    for k in 0..n_tensors {
        let len = params.tensors()[k].len();
        let stride = match max_per_tensor {
            Some(m) if m > 0 && len > m => len.div_ceil(m),
            _ => 1,
        };
        for idx in (0..len).step_by(stride) {
            let probe = |delta: f64| {
                let mut p = params.clone();
                let t = &mut p.tensors_mut()[k];
                let cols = t.ncols();
                t[[idx / cols, idx % cols]] += delta;
                loss(&p)
            };
            let fd = (probe(step) - probe(-step)) / (2.0 * step);
            let t = analytic.tensors()[k];
            let a = t[[idx / t.ncols(), idx % t.ncols()]];
            worst = worst.max(relative_error(a, fd));
        }
    }
    worst
}

/// `|a - b| / max(|a|, |b|, 1e-6)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Pair {
        a: Mat,
        b: Mat,
    }

    impl Parameters for Pair {
        fn names(&self) -> Vec<String> {
            vec!["a".into(), "b".into()]
        }
        fn tensors(&self) -> Vec<&Mat> {
            vec![&self.a, &self.b]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Mat> {
            vec![&mut self.a, &mut self.b]
        }
    }

    fn sample() -> Pair {
        let mut rng = seeded_rng(3);
        Pair {
            a: uniform(&mut rng, 2, 3, 0.1),
            b: uniform(&mut rng, 1, 4, 1e-300),
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let p = sample();
        let text = to_checkpoint_text(&p);
        let q = from_checkpoint_text(&text, &p).unwrap();
        assert_eq!(param_hash(&p), param_hash(&q));
    }

    #[test]
    fn checkpoint_rejects_wrong_shape() {
        let p = sample();
        let text = to_checkpoint_text(&p).replace("tensor a 2 3", "tensor a 3 2");
        assert!(matches!(
            from_checkpoint_text(&text, &p),
            Err(ModelError::ShapeMismatch(_))
        ));
        assert!(from_checkpoint_text("junk", &p).is_err());
    }

    #[test]
    fn hash_tracks_single_bit_changes() {
        let p = sample();
        let mut q = p.clone();
        q.a[[1, 2]] = f64::from_bits(q.a[[1, 2]].to_bits() ^ 1);
        assert_ne!(param_hash(&p), param_hash(&q));
    }

    #[test]
    fn adam_zero_lr_leaves_params() {
        let mut p = sample();
        let before = param_hash(&p);
        let mut g = p.clone();
        g.a.fill(0.3);
        let mut opt = Adam::new(0.0);
        opt.step(&mut p, &g);
        assert_eq!(before, param_hash(&p));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // with bias correction the first update is lr * sign(g)
        let mut p = sample();
        let start = p.a.clone();
        let mut g = p.zeros_like();
        g.a.fill(0.01);
        let mut opt = Adam::new(0.5);
        opt.step(&mut p, &g);
        for (x, y) in p.a.iter().zip(start.iter()) {
            assert!((y - x - 0.5).abs() < 1e-6);
        }
    }
}
