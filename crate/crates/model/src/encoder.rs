// SPDX-License-Identifier: Apache-2.0

//! Symbolic featurisation of graph nodes and a message-passing encoder.
//!
//! Each layer computes `H' = tanh(H W_self + A(H) W_nbr + b)` where row `i`
//! of `A(H)` sums the rows of all in- and out-neighbours of node `i`. The
//! graph embedding is the mean of the final node embeddings.

use std::rc::Rc;

use netreason_core::{truth_table, BoolExpr, Node, NodeKind, TaGraph};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ModelError, Result};
use crate::params::{seeded_rng, uniform, Parameters};
use crate::tape::{Mat, Tape, Var};

/// Structural families used for the cell-kind one-hot.
pub const CELL_FAMILIES: [&str; 10] = [
    "buffer", "and", "or", "xor", "and-or", "or-and", "mixed", "register", "input", "output",
];

pub const DEFAULT_SIGNATURE_BUCKETS: usize = 16;
pub const MAX_SIGNATURE_SUPPORT: usize = 6;

/// Layout of a feature vector:
/// `[not, and, or, xor, depth, support | family one-hot | signature buckets | kind flags]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub signature_buckets: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            signature_buckets: DEFAULT_SIGNATURE_BUCKETS,
        }
    }
}

impl FeatureConfig {
    pub const OPS: usize = 6;
    pub const KINDS: usize = 4;

    pub fn len(&self) -> usize {
        Self::OPS + CELL_FAMILIES.len() + self.signature_buckets + Self::KINDS
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn family_offset(&self) -> usize {
        Self::OPS
    }

    pub fn signature_offset(&self) -> usize {
        Self::OPS + CELL_FAMILIES.len()
    }

    pub fn kind_offset(&self) -> usize {
        self.signature_offset() + self.signature_buckets
    }
}

fn strip_not(e: &BoolExpr) -> &BoolExpr {
    match e {
        BoolExpr::Not(x) => strip_not(x),
        other => other,
    }
}

/// Nesting depth of AND/OR/XOR operators; inverters do not add depth.
pub fn logic_depth(e: &BoolExpr) -> usize {
    match e {
        BoolExpr::Const(_) | BoolExpr::Var(_) => 0,
        BoolExpr::Not(x) => logic_depth(x),
        BoolExpr::And(xs) | BoolExpr::Or(xs) | BoolExpr::Xor(xs) => {
            1 + xs.iter().map(logic_depth).max().unwrap_or(0)
        }
    }
}

/// Structural family of a node: inverters are ignored, so NAND2 and AND2
/// share the `and` family.
pub fn cell_family(node: &Node) -> &'static str {
    match node.kind {
        NodeKind::Register => return "register",
        NodeKind::PrimaryInput => return "input",
        NodeKind::PrimaryOutput => return "output",
        NodeKind::Gate => {}
    }
    let top = strip_not(&node.expr);
    let children_ops = |xs: &[BoolExpr]| {
        xs.iter()
            .map(strip_not)
            .filter(|c| !matches!(c, BoolExpr::Var(_) | BoolExpr::Const(_)))
            .map(std::mem::discriminant)
            .collect::<Vec<_>>()
    };
    match top {
        BoolExpr::Const(_) | BoolExpr::Var(_) => "buffer",
        BoolExpr::And(xs) | BoolExpr::Or(xs) | BoolExpr::Xor(xs) => {
            let kids = children_ops(xs);
            if kids.is_empty() {
                match top {
                    BoolExpr::And(_) => "and",
                    BoolExpr::Or(_) => "or",
                    _ => "xor",
                }
            } else {
                let and_d = std::mem::discriminant(&BoolExpr::And(vec![]));
                let or_d = std::mem::discriminant(&BoolExpr::Or(vec![]));
                match top {
                    BoolExpr::Or(_) if kids.iter().all(|d| *d == and_d) => "and-or",
                    BoolExpr::And(_) if kids.iter().all(|d| *d == or_d) => "or-and",
                    _ => "mixed",
                }
            }
        }
        BoolExpr::Not(_) => unreachable!("inverters stripped"),
    }
}

/// Signature invariant under renaming of inputs: support size, on-set size
/// and the sorted positive-cofactor on-set sizes. `None` above the support
/// limit.
pub fn truth_signature(e: &BoolExpr) -> Option<(usize, usize, Vec<usize>)> {
    let n = e.support().len();
    if n > MAX_SIGNATURE_SUPPORT {
        return None;
    }
    let tt = truth_table(e).ok()?;
    let ones = tt.bits.iter().filter(|b| **b).count();
    // row index: first support variable is the most significant bit
    let mut cof: Vec<usize> = (0..n)
        .map(|v| {
            let bit = 1usize << (n - 1 - v);
            tt.bits
                .iter()
                .enumerate()
                .filter(|(row, b)| **b && row & bit != 0)
                .count()
        })
        .collect();
    cof.sort_unstable();
    Some((n, ones, cof))
}

fn signature_bucket(sig: &(usize, usize, Vec<usize>), buckets: usize) -> usize {
    let digest = Sha256::digest(format!("{sig:?}").as_bytes());
    let word = u64::from_le_bytes(digest[..8].try_into().unwrap());
    (word % buckets as u64) as usize
}

/// Deterministic features of one node.
pub fn featurize(node: &Node, cfg: &FeatureConfig) -> Vec<f64> {
    let mut f = vec![0.0; cfg.len()];
    let is_logic = matches!(node.kind, NodeKind::Gate);
    if is_logic {
        let c = node.expr.op_counts();
        f[0] = c.not as f64;
        f[1] = c.and as f64;
        f[2] = c.or as f64;
        f[3] = c.xor as f64;
        f[4] = logic_depth(&node.expr) as f64;
        f[5] = node.expr.support().len() as f64;
    }
    let fam = CELL_FAMILIES
        .iter()
        .position(|x| *x == cell_family(node))
        .unwrap();
    f[cfg.family_offset() + fam] = 1.0;
    if is_logic && cfg.signature_buckets > 0 {
        if let Some(sig) = truth_signature(&node.expr) {
            f[cfg.signature_offset() + signature_bucket(&sig, cfg.signature_buckets)] = 1.0;
        }
    }
    let kind = match node.kind {
        NodeKind::PrimaryInput => 0,
        NodeKind::Gate => 1,
        NodeKind::Register => 2,
        NodeKind::PrimaryOutput => 3,
    };
    f[cfg.kind_offset() + kind] = 1.0;
    f
}

pub fn feature_matrix(g: &TaGraph, cfg: &FeatureConfig) -> Mat {
    let mut m = Mat::zeros((g.len(), cfg.len()));
    for (i, n) in g.nodes.iter().enumerate() {
        for (j, v) in featurize(n, cfg).into_iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    m
}

/// Union of in- and out-neighbour lists per node.
pub fn neighbor_lists(g: &TaGraph) -> Vec<Vec<usize>> {
    let (ins, outs) = g.adjacency();
    ins.into_iter()
        .zip(outs)
        .map(|(mut a, b)| {
            a.extend(b);
            a
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub w_self: Mat,
    /// Absent in the features-only variant.
    pub w_nbr: Option<Mat>,
    pub bias: Mat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub layers: usize,
    pub d_enc: usize,
    pub message_passing: bool,
    pub features: FeatureConfig,
    pub seed: u64,
    pub init_bound: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            layers: 3,
            d_enc: 64,
            message_passing: true,
            features: FeatureConfig::default(),
            seed: 0,
            init_bound: 0.1,
        }
    }
}

impl EncoderConfig {
    /// Features-only encoder: one self-transform, no neighbour messages.
    pub fn weak(d_enc: usize, seed: u64) -> Self {
        EncoderConfig {
            layers: 1,
            d_enc,
            message_passing: false,
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub features: FeatureConfig,
    pub layers: Vec<EncoderLayer>,
}

impl EncoderParams {
    pub fn init(cfg: &EncoderConfig) -> Self {
        let mut rng = seeded_rng(cfg.seed);
        let mut d_in = cfg.features.len();
        let layers = (0..cfg.layers)
            .map(|_| {
                let layer = EncoderLayer {
                    w_self: uniform(&mut rng, d_in, cfg.d_enc, cfg.init_bound),
                    w_nbr: cfg
                        .message_passing
                        .then(|| uniform(&mut rng, d_in, cfg.d_enc, cfg.init_bound)),
                    bias: uniform(&mut rng, 1, cfg.d_enc, cfg.init_bound),
                };
                d_in = cfg.d_enc;
                layer
            })
            .collect();
        EncoderParams {
            features: cfg.features,
            layers,
        }
    }

    pub fn d_enc(&self) -> usize {
        self.layers
            .last()
            .map_or(self.features.len(), |l| l.bias.ncols())
    }

    pub fn uses_message_passing(&self) -> bool {
        self.layers.iter().any(|l| l.w_nbr.is_some())
    }

    pub fn check_shapes(&self) -> Result<()> {
        let mut d_in = self.features.len();
        for (k, l) in self.layers.iter().enumerate() {
            let d = l.bias.ncols();
            let ok = l.w_self.dim() == (d_in, d)
                && l.bias.nrows() == 1
                && l.w_nbr.as_ref().map_or(true, |w| w.dim() == (d_in, d));
            if !ok {
                return Err(ModelError::ShapeMismatch(format!(
                    "encoder layer {k} expects input width {d_in}"
                )));
            }
            d_in = d;
        }
        Ok(())
    }
}

impl Parameters for EncoderParams {
    fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (k, l) in self.layers.iter().enumerate() {
            out.push(format!("enc.{k}.w_self"));
            if l.w_nbr.is_some() {
                out.push(format!("enc.{k}.w_nbr"));
            }
            out.push(format!("enc.{k}.bias"));
        }
        out
    }

    fn tensors(&self) -> Vec<&Mat> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(&l.w_self);
            if let Some(w) = &l.w_nbr {
                out.push(w);
            }
            out.push(&l.bias);
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.w_self);
            if let Some(w) = &mut l.w_nbr {
                out.push(w);
            }
            out.push(&mut l.bias);
        }
        out
    }
}

/// Encoder outputs: row `i` of `nodes` is the embedding of node id `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub nodes: Mat,
    pub graph: Vec<f64>,
}

impl EmbeddingSet {
    pub fn node(&self, id: usize) -> Vec<f64> {
        self.nodes.row(id).to_vec()
    }
}

/// Encoder inputs prepared once per graph.
#[derive(Debug, Clone)]
pub struct GraphInput {
    pub features: Mat,
    pub neighbors: Rc<Vec<Vec<usize>>>,
}

impl GraphInput {
    pub fn new(g: &TaGraph, cfg: &FeatureConfig) -> Self {
        GraphInput {
            features: feature_matrix(g, cfg),
            neighbors: Rc::new(neighbor_lists(g)),
        }
    }
}

/// Records the encoder on `tape`; returns (node embeddings, graph embedding).
pub fn encode_on_tape(
    tape: &mut Tape,
    vars: &[Var],
    p: &EncoderParams,
    input: &GraphInput,
) -> Result<(Var, Var)> {
    p.check_shapes()?;
    if input.features.ncols() != p.features.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "feature width {} but encoder expects {}",
            input.features.ncols(),
            p.features.len()
        )));
    }
    if input.features.nrows() == 0 {
        return Err(ModelError::ShapeMismatch("graph has no nodes".into()));
    }
    let mut h = tape.leaf(input.features.clone());
    let mut it = vars.iter().copied();
    for l in &p.layers {
        let w_self = it.next().unwrap();
        let mut z = tape.matmul(h, w_self);
        if l.w_nbr.is_some() {
            let w_nbr = it.next().unwrap();
            let agg = tape.neighbor_sum(h, input.neighbors.clone());
            let m = tape.matmul(agg, w_nbr);
            z = tape.add(z, m);
        }
        let b = it.next().unwrap();
        let z = tape.add_row(z, b);
        h = tape.tanh(z);
    }
    let g = tape.mean_rows(h);
    Ok((h, g))
}

pub fn encode(g: &TaGraph, p: &EncoderParams) -> Result<EmbeddingSet> {
    encode_input(&GraphInput::new(g, &p.features), p)
}

pub fn encode_input(input: &GraphInput, p: &EncoderParams) -> Result<EmbeddingSet> {
    let mut tape = Tape::new();
    let vars = p.bind(&mut tape);
    let (h, g) = encode_on_tape(&mut tape, &vars, p, input)?;
    Ok(EmbeddingSet {
        nodes: tape.value(h).clone(),
        graph: tape.value(g).row(0).to_vec(),
    })
}

/// Max relative error between analytic and central-difference gradients of
/// `probe . N_g` with respect to every encoder parameter.
pub fn encoder_grad_check(g: &TaGraph, p: &EncoderParams, probe: &[f64], step: f64) -> Result<f64> {
    let input = GraphInput::new(g, &p.features);
    let probe_m = Mat::from_shape_vec((p.d_enc(), 1), probe.to_vec()).map_err(|_| {
        ModelError::ShapeMismatch(format!(
            "probe length {} vs d_enc {}",
            probe.len(),
            p.d_enc()
        ))
    })?;
    let analytic = encoder_probe_grad(&input, p, &probe_m)?;
    let loss = |q: &EncoderParams| {
        let e = encode_input(&input, q).expect("shapes checked");
        e.graph.iter().zip(probe).map(|(a, b)| a * b).sum::<f64>()
    };
    Ok(crate::params::finite_difference_error(
        p, &analytic, step, None, loss,
    ))
}

/// Gradient of `probe . N_g` with respect to the encoder parameters.
pub fn encoder_probe_grad(
    input: &GraphInput,
    p: &EncoderParams,
    probe: &Mat,
) -> Result<EncoderParams> {
    let mut tape = Tape::new();
    let vars = p.bind(&mut tape);
    let (_, g) = encode_on_tape(&mut tape, &vars, p, input)?;
    let w = tape.leaf(probe.clone());
    let s = tape.matmul(g, w);
    let grads = tape.backward(s);
    Ok(p.grads_from(&vars, &grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use netreason_core::{build_tag_graph, parse_netlist, CellLibrary};

    fn graph(src: &str) -> TaGraph {
        let lib = CellLibrary::builtin();
        build_tag_graph(&parse_netlist(src, &lib).unwrap(), &lib).unwrap()
    }

    fn gate_node(src: &str) -> Node {
        graph(src).gate_nodes().next().unwrap().clone()
    }

    const AND: &str =
        "module m(a, b, y); input a, b; output y; AND2 g0(.A(a), .B(b), .Y(y)); endmodule";
    const NAND: &str =
        "module m(a, b, y); input a, b; output y; NAND2 g0(.A(a), .B(b), .Y(y)); endmodule";

    #[test]
    fn and_gate_features() {
        let cfg = FeatureConfig::default();
        let f = featurize(&gate_node(AND), &cfg);
        assert_eq!(&f[..6], &[0.0, 1.0, 0.0, 0.0, 1.0, 2.0]);
        assert_eq!(f[cfg.family_offset() + 1], 1.0);
        assert_eq!(f[cfg.kind_offset() + 1], 1.0);
        assert_eq!(f.len(), cfg.len());
    }

    #[test]
    fn primary_input_features() {
        let cfg = FeatureConfig::default();
        let g = graph(AND);
        let f = featurize(&g.nodes[0], &cfg);
        assert_eq!(g.nodes[0].kind, NodeKind::PrimaryInput);
        assert!(f[..6].iter().all(|x| *x == 0.0));
        assert_eq!(f[cfg.kind_offset()], 1.0);
        assert!(f[cfg.signature_offset()..cfg.kind_offset()]
            .iter()
            .all(|x| *x == 0.0));
    }

    #[test]
    fn nand_and_differ_in_not_count_and_signature_only() {
        let cfg = FeatureConfig::default();
        let a = featurize(&gate_node(AND), &cfg);
        let n = featurize(&gate_node(NAND), &cfg);
        let diff: Vec<usize> = (0..a.len()).filter(|&i| a[i] != n[i]).collect();
        assert!(diff.contains(&0));
        let sig = cfg.signature_offset()..cfg.kind_offset();
        assert!(diff.iter().all(|&i| i == 0 || sig.contains(&i)), "{diff:?}");
        assert!(
            diff.iter().any(|i| sig.contains(i)),
            "signature buckets collide"
        );
    }

    #[test]
    fn signature_ignores_input_names() {
        let e1 = BoolExpr::parse_template("(a & !b) | c").unwrap();
        let e2 = BoolExpr::parse_template("(z & !x) | y").unwrap();
        assert_eq!(truth_signature(&e1), truth_signature(&e2));
    }

    #[test]
    fn init_is_seeded() {
        let cfg = EncoderConfig::default();
        assert_eq!(EncoderParams::init(&cfg), EncoderParams::init(&cfg));
        let other = EncoderParams::init(&EncoderConfig {
            seed: 1,
            ..cfg.clone()
        });
        assert_ne!(EncoderParams::init(&cfg), other);
        for t in other.tensors() {
            assert!(t.iter().all(|x| x.abs() <= 0.1));
        }
    }

    #[test]
    fn weak_encoder_has_no_neighbour_weights() {
        let p = EncoderParams::init(&EncoderConfig::weak(64, 0));
        assert!(!p.uses_message_passing());
        assert_eq!(p.layers.len(), 1);
        assert_eq!(p.d_enc(), 64);
    }
}
