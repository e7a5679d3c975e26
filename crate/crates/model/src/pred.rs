// SPDX-License-Identifier: Apache-2.0

//! Gate-function prediction: a classifier head over encoder node
//! embeddings, netlist annotation with the predicted labels, and the
//! two-step prompt sent to an external chat model.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::rc::Rc;

use netreason_core::emit::gate_line;
use netreason_core::{emit_verilog, Netlist, NodeKind, TaGraph};
use netreason_llm::{ChatMessage, LlmClient};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::embed::{argmax, Linear};
use crate::encoder::{encode_on_tape, EncoderParams, GraphInput};
use crate::error::{ModelError, Result};
use crate::params::{param_hash, seeded_rng, uniform, Adam, Parameters};
use crate::tape::{Mat, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionLabel {
    Adder,
    Multiplier,
    Comparator,
    Subtractor,
    Control,
}

pub const NUM_CLASSES: usize = 5;

impl FunctionLabel {
    pub const ALL: [FunctionLabel; NUM_CLASSES] = [
        FunctionLabel::Adder,
        FunctionLabel::Multiplier,
        FunctionLabel::Comparator,
        FunctionLabel::Subtractor,
        FunctionLabel::Control,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Result<Self> {
        Self::ALL
            .get(code)
            .copied()
            .ok_or(ModelError::BadLabel(code))
    }

    /// Internal identifier.
    pub fn name(self) -> &'static str {
        match self {
            FunctionLabel::Adder => "adder",
            FunctionLabel::Multiplier => "multiplier",
            FunctionLabel::Comparator => "comparator",
            FunctionLabel::Subtractor => "subtractor",
            FunctionLabel::Control => "control",
        }
    }

    /// Name shown in annotations and reports.
    pub fn display_name(self) -> &'static str {
        match self {
            FunctionLabel::Control => "controller",
            other => other.name(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_lowercase();
        Self::ALL.into_iter().find(|l| {
            l.name() == s || l.display_name() == s || s.parse::<usize>().ok() == Some(l.code())
        })
    }
}

impl fmt::Display for FunctionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    pub hidden: usize,
    /// Number of linear layers.
    pub layers: usize,
    pub seed: u64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            hidden: 256,
            layers: 3,
            seed: 7,
        }
    }
}

/// MLP from encoder width to five class logits, tanh between layers.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub layers: Vec<Linear>,
}

impl HeadParams {
    pub fn init(d_enc: usize, cfg: &HeadConfig) -> Self {
        let mut rng = seeded_rng(cfg.seed);
        let mut dims = vec![d_enc];
        dims.extend(std::iter::repeat(cfg.hidden).take(cfg.layers.max(1) - 1));
        dims.push(NUM_CLASSES);
        let layers = dims
            .windows(2)
            .map(|w| Linear {
                w: uniform(&mut rng, w[0], w[1], 1.0 / (w[0] as f64).sqrt()),
                b: Mat::zeros((1, w[1])),
            })
            .collect();
        HeadParams { layers }
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].w.nrows()
    }
}

impl Parameters for HeadParams {
    fn names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|k| [format!("head.{k}.w"), format!("head.{k}.b")])
            .collect()
    }

    fn tensors(&self) -> Vec<&Mat> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.w, &mut l.b])
            .collect()
    }
}

fn head_on_tape(tape: &mut Tape, vars: &[Var], head: &HeadParams, x: Var) -> Var {
    let mut h = x;
    for k in 0..head.layers.len() {
        let z = tape.matmul(h, vars[2 * k]);
        let z = tape.add_row(z, vars[2 * k + 1]);
        h = if k + 1 < head.layers.len() {
            tape.tanh(z)
        } else {
            z
        };
    }
    h
}

/// Logits (rows x 5) for a matrix of node embeddings.
pub fn head_logits(embeddings: &Mat, head: &HeadParams) -> Result<Mat> {
    if embeddings.ncols() != head.d_in() {
        return Err(ModelError::ShapeMismatch(format!(
            "embedding width {} vs head input {}",
            embeddings.ncols(),
            head.d_in()
        )));
    }
    let mut tape = Tape::new();
    let vars = head.bind(&mut tape);
    let x = tape.leaf(embeddings.clone());
    let out = head_on_tape(&mut tape, &vars, head, x);
    Ok(tape.value(out).clone())
}

/// Mean cross-entropy over rows that carry a label.
pub fn ce_loss(logits: &Mat, labels: &[Option<FunctionLabel>]) -> Result<f64> {
    if logits.ncols() != NUM_CLASSES || logits.nrows() != labels.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "{}x{} logits for {} labels",
            logits.nrows(),
            logits.ncols(),
            labels.len()
        )));
    }
    let targets = label_targets(labels)?;
    let mut tape = Tape::new();
    let z = tape.leaf(logits.clone());
    let l = tape.cross_entropy(z, targets);
    Ok(tape.value(l)[[0, 0]])
}

fn label_targets(labels: &[Option<FunctionLabel>]) -> Result<Rc<Vec<Option<usize>>>> {
    if labels.iter().all(Option::is_none) {
        return Err(ModelError::NoLabels);
    }
    Ok(Rc::new(
        labels.iter().map(|l| l.map(FunctionLabel::code)).collect(),
    ))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// A graph with one optional label per node id; only gates are labeled.
#[derive(Debug, Clone)]
pub struct LabeledGraph {
    pub name: String,
    pub graph: TaGraph,
    pub labels: Vec<Option<FunctionLabel>>,
}

impl LabeledGraph {
    /// Labels given per gate index of the source netlist.
    pub fn from_gate_labels(
        name: &str,
        graph: TaGraph,
        gate_labels: &[Option<FunctionLabel>],
    ) -> Self {
        let labels = graph
            .nodes
            .iter()
            .map(|n| match (n.kind, n.gate_index) {
                (NodeKind::Gate, Some(i)) => gate_labels.get(i).copied().flatten(),
                _ => None,
            })
            .collect();
        LabeledGraph {
            name: name.to_string(),
            graph,
            labels,
        }
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadTrainConfig {
    pub head: HeadConfig,
    pub lr: f64,
    pub epochs: usize,
    pub steps: Option<usize>,
    pub seed: u64,
    /// Update encoder parameters together with the head.
    pub co_train: bool,
    /// Fraction of designs held out for accuracy reporting.
    pub holdout_fraction: f64,
    pub clip_norm: Option<f64>,
    pub verify_every_step: bool,
}

impl Default for HeadTrainConfig {
    fn default() -> Self {
        HeadTrainConfig {
            head: HeadConfig::default(),
            lr: 1e-3,
            epochs: 20,
            steps: None,
            seed: 0,
            co_train: true,
            holdout_fraction: 0.2,
            clip_norm: Some(1.0),
            verify_every_step: cfg!(debug_assertions),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HeadTrainReport {
    pub losses: Vec<(usize, f64)>,
    pub train_designs: Vec<String>,
    pub holdout_designs: Vec<String>,
    pub train_accuracy: f64,
    pub holdout_accuracy: Option<f64>,
    pub encoder_hash_before: String,
    pub encoder_hash_after: String,
}

/// Deterministic design-level split: (train indices, held-out indices).
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded_rng(seed ^ 0x5eed));
    let k = if n < 2 || fraction <= 0.0 {
        0
    } else {
        ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
    };
    let held = idx[..k].to_vec();
    let mut train = idx[k..].to_vec();
    train.sort_unstable();
    let mut held = held;
    held.sort_unstable();
    (train, held)
}

fn graph_loss_grad(
    enc: &EncoderParams,
    head: &HeadParams,
    input: &GraphInput,
    targets: Rc<Vec<Option<usize>>>,
) -> Result<(f64, EncoderParams, HeadParams)> {
    let mut tape = Tape::new();
    let ev = enc.bind(&mut tape);
    let hv = head.bind(&mut tape);
    let (nodes, _) = encode_on_tape(&mut tape, &ev, enc, input)?;
    let logits = head_on_tape(&mut tape, &hv, head, nodes);
    let loss = tape.cross_entropy(logits, targets);
    let value = tape.value(loss)[[0, 0]];
    let g = tape.backward(loss);
    Ok((value, enc.grads_from(&ev, &g), head.grads_from(&hv, &g)))
}

/// Loss of one labeled graph and gradients for (encoder, head).
pub fn head_loss_grad(
    enc: &EncoderParams,
    head: &HeadParams,
    data: &LabeledGraph,
) -> Result<(f64, EncoderParams, HeadParams)> {
    let input = GraphInput::new(&data.graph, &enc.features);
    graph_loss_grad(enc, head, &input, label_targets(&data.labels)?)
}

/// Loss of one labeled graph without gradients.
pub fn head_loss(enc: &EncoderParams, head: &HeadParams, data: &LabeledGraph) -> Result<f64> {
    let e = crate::encoder::encode(&data.graph, enc)?;
    ce_loss(&head_logits(&e.nodes, head)?, &data.labels)
}

/// (correct, total) over labeled gates.
pub fn accuracy(
    data: &[&LabeledGraph],
    enc: &EncoderParams,
    head: &HeadParams,
) -> Result<(usize, usize)> {
    let mut correct = 0;
    let mut total = 0;
    for d in data {
        let e = crate::encoder::encode(&d.graph, enc)?;
        let logits = head_logits(&e.nodes, head)?;
        for (r, l) in d.labels.iter().enumerate() {
            if let Some(l) = l {
                total += 1;
                if argmax(logits.row(r).iter().copied()) == l.code() {
                    correct += 1;
                }
            }
        }
    }
    Ok((correct, total))
}

fn ratio((c, t): (usize, usize)) -> f64 {
    if t == 0 {
        0.0
    } else {
        c as f64 / t as f64
    }
}

/// Trains a fresh head; see [`train_head_from`].
pub fn train_head(
    data: &[LabeledGraph],
    enc: &mut EncoderParams,
    cfg: &HeadTrainConfig,
) -> Result<(HeadParams, HeadTrainReport)> {
    let mut head = HeadParams::init(enc.d_enc(), &cfg.head);
    let report = train_head_from(data, enc, &mut head, cfg)?;
    Ok((head, report))
}

/// Trains `head` (and `enc` when co-training) on the non-held-out designs,
/// one design per step in a seeded shuffled order.
pub fn train_head_from(
    data: &[LabeledGraph],
    enc: &mut EncoderParams,
    head: &mut HeadParams,
    cfg: &HeadTrainConfig,
) -> Result<HeadTrainReport> {
    let enc_before = param_hash(enc);
    let (train_idx, held_idx) = holdout_split(data.len(), cfg.holdout_fraction, cfg.seed);
    let train_idx: Vec<usize> = train_idx
        .into_iter()
        .filter(|&i| data[i].labeled_count() > 0)
        .collect();
    if train_idx.is_empty() {
        return Err(ModelError::NoLabels);
    }
    let inputs: Vec<Option<(GraphInput, Rc<Vec<Option<usize>>>)>> = data
        .iter()
        .enumerate()
        .map(|(i, d)| {
            train_idx
                .contains(&i)
                .then(|| {
                    Ok((
                        GraphInput::new(&d.graph, &enc.features),
                        label_targets(&d.labels)?,
                    ))
                })
                .transpose()
        })
        .collect::<Result<_>>()?;
    let total = cfg.steps.unwrap_or(cfg.epochs * train_idx.len());
    let mut rng = seeded_rng(cfg.seed);
    let mut opt = Adam::new(cfg.lr);
    opt.clip_norm = cfg.clip_norm;
    let mut order: Vec<usize> = Vec::new();
    let mut losses = Vec::with_capacity(total);
    for step in 1..=total {
        if order.is_empty() {
            order = train_idx.clone();
            order.shuffle(&mut rng);
            order.reverse();
        }
        let i = order.pop().unwrap();
        let (input, targets) = inputs[i].as_ref().unwrap();
        let (loss, ge, gh) = graph_loss_grad(enc, head, input, targets.clone())?;
        if cfg.co_train {
            let mut joint = (enc.clone(), head.clone());
            opt.step(&mut joint, &(ge, gh));
            *enc = joint.0;
            *head = joint.1;
        } else {
            opt.step(head, &gh);
            if cfg.verify_every_step && param_hash(enc) != enc_before {
                return Err(ModelError::FrozenViolation("encoder".into()));
            }
        }
        losses.push((step, loss));
    }
    let enc_after = param_hash(enc);
    if !cfg.co_train && enc_after != enc_before {
        return Err(ModelError::FrozenViolation("encoder".into()));
    }
    let train: Vec<&LabeledGraph> = train_idx.iter().map(|&i| &data[i]).collect();
    let held: Vec<&LabeledGraph> = held_idx.iter().map(|&i| &data[i]).collect();
    let report = HeadTrainReport {
        losses,
        train_designs: train.iter().map(|d| d.name.clone()).collect(),
        holdout_designs: held.iter().map(|d| d.name.clone()).collect(),
        train_accuracy: ratio(accuracy(&train, enc, head)?),
        holdout_accuracy: if held.is_empty() {
            None
        } else {
            Some(ratio(accuracy(&held, enc, head)?))
        },
        encoder_hash_before: enc_before,
        encoder_hash_after: enc_after,
    };
    log::info!(
        "head training: train accuracy {:.4}, held-out accuracy {:?}",
        report.train_accuracy,
        report.holdout_accuracy
    );
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatePrediction {
    pub node: usize,
    pub gate_index: usize,
    pub instance: String,
    pub label: FunctionLabel,
    pub confidence: f64,
    pub probs: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Softmax class probabilities for every gate node, in node order.
pub fn classify_gates(
    g: &TaGraph,
    enc: &EncoderParams,
    head: &HeadParams,
) -> Result<Vec<GatePrediction>> {
    let e = crate::encoder::encode(g, enc)?;
    let logits = head_logits(&e.nodes, head)?;
    Ok(g.nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Gate)
        .map(|n| {
            let z = logits.row(n.id).to_vec();
            let probs = softmax(&z);
            let best = argmax(probs.iter().copied());
            GatePrediction {
                node: n.id,
                gate_index: n.gate_index.expect("gate nodes carry their index"),
                instance: n.name.clone(),
                label: FunctionLabel::ALL[best],
                confidence: probs[best],
                probs,
                logits: z,
            }
        })
        .collect())
}

/// Instance name to (label, confidence).
pub type PredictionMap = BTreeMap<String, (FunctionLabel, f64)>;

pub fn prediction_map(preds: &[GatePrediction]) -> PredictionMap {
    preds
        .iter()
        .map(|p| (p.instance.clone(), (p.label, p.confidence)))
        .collect()
}

pub const ANNOTATION_PREFIX: &str = "// func: ";

/// Netlist text with per-gate function comments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedNetlist {
    pub module: String,
    pub text: String,
}

impl AnnotatedNetlist {
    pub fn annotation_count(&self) -> usize {
        self.text.matches(ANNOTATION_PREFIX).count()
    }

    /// The same text with every `// func:` comment removed.
    pub fn without_annotations(&self) -> String {
        strip_annotations(&self.text)
    }
}

pub fn strip_annotations(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.split_inclusive('\n') {
        let (body, nl) = match line.strip_suffix('\n') {
            Some(b) => (b, "\n"),
            None => (line, ""),
        };
        match body.find(&format!(" {ANNOTATION_PREFIX}")) {
            Some(pos) => out.push_str(&body[..pos]),
            None => out.push_str(body),
        }
        out.push_str(nl);
    }
    out
}

/// Appends `// func: <label> (p=<confidence>)` to every gate line of the
/// canonical text of `n`.
pub fn annotate_netlist(
    n: &Netlist,
    preds: &PredictionMap,
    with_confidence: bool,
) -> Result<AnnotatedNetlist> {
    let mut by_line: BTreeMap<String, String> = BTreeMap::new();
    for g in &n.gates {
        let (label, p) = preds
            .get(&g.instance_name)
            .ok_or_else(|| ModelError::MissingPrediction(g.instance_name.clone()))?;
        let comment = if with_confidence {
            format!("{ANNOTATION_PREFIX}{label} (p={p:.2})")
        } else {
            format!("{ANNOTATION_PREFIX}{label}")
        };
        by_line.insert(gate_line(g), comment);
    }
    let mut text = String::new();
    for line in emit_verilog(n).lines() {
        text.push_str(line);
        if let Some(c) = by_line.get(line.trim()) {
            text.push(' ');
            text.push_str(c);
        }
        text.push('\n');
    }
    Ok(AnnotatedNetlist {
        module: n.name.clone(),
        text,
    })
}

/// System and user templates. `{module}`, `{netlist}` and `{annotation_note}`
/// are substituted; the note is empty when annotations are disabled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub system: String,
    pub user: String,
}

const ANNOTATION_NOTE: &str =
    " Comments of the form `// func: <label> (p=<confidence>)` give the predicted high-level function of each gate.";

pub const STEP_ONE: &str =
    "Step 1: Reason about the word-level arithmetic function description based on the given circuit netlist with gate annotations.";
pub const STEP_TWO: &str = "Step 2: Generate RTL code to implement the identified arithmetic function, ensuring word-level RTL operations and avoiding bit-level operations.";

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            system: "You are a hardware design expert who recovers register-transfer level designs from gate-level netlists.".into(),
            user: format!(
                "The gate-level netlist of module `{{module}}` is given below in structural Verilog.{{annotation_note}}\n\n\
```verilog\n{{netlist}}```\n\n\
Work through the following two steps in order.\n\
{STEP_ONE}\n\
{STEP_TWO}\n\n\
Keep the module name `{{module}}` and all port names and widths unchanged. \
Put the final RTL in one ```verilog code block."
            ),
        }
    }
}

impl PromptTemplate {
    /// Reads a JSON file with `system` and `user` string fields.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| ModelError::Checkpoint(format!("prompt template: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptOptions {
    /// Keep `// func:` comments in the embedded netlist.
    pub annotations: bool,
}

impl Default for PromptOptions {
    fn default() -> Self {
        PromptOptions { annotations: true }
    }
}

pub fn build_cot_prompt(
    a: &AnnotatedNetlist,
    opts: &PromptOptions,
    template: &PromptTemplate,
) -> Vec<ChatMessage> {
    let netlist = if opts.annotations {
        a.text.clone()
    } else {
        a.without_annotations()
    };
    let note = if opts.annotations {
        ANNOTATION_NOTE
    } else {
        ""
    };
    let user = template
        .user
        .replace("{annotation_note}", note)
        .replace("{module}", &a.module)
        .replace("{netlist}", &netlist);
    vec![
        ChatMessage::system(template.system.clone()),
        ChatMessage::user(user),
    ]
}

pub fn llm_complete(messages: &[ChatMessage], client: &LlmClient) -> Result<String> {
    Ok(client.complete(messages)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_codes_and_names() {
        let codes: Vec<usize> = FunctionLabel::ALL.iter().map(|l| l.code()).collect();
        assert_eq!(codes, vec![0, 1, 2, 3, 4]);
        assert_eq!(FunctionLabel::Control.name(), "control");
        assert_eq!(FunctionLabel::Control.to_string(), "controller");
        assert_eq!(
            FunctionLabel::parse("controller"),
            Some(FunctionLabel::Control)
        );
        assert_eq!(FunctionLabel::parse("3"), Some(FunctionLabel::Subtractor));
        assert!(FunctionLabel::from_code(5).is_err());
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let (a, b) = holdout_split(10, 0.2, 3);
        assert_eq!((a.len(), b.len()), (8, 2));
        assert_eq!(holdout_split(10, 0.2, 3), (a.clone(), b.clone()));
        assert!(b.iter().all(|i| !a.contains(i)));
        assert_eq!(holdout_split(1, 0.5, 0).1.len(), 0);
    }

    #[test]
    fn strip_only_touches_annotations() {
        let t = "  AND2 g0 (.A(a), .B(b), .Y(y)); // func: adder (p=0.91)\n  // keep\nendmodule\n";
        assert_eq!(
            strip_annotations(t),
            "  AND2 g0 (.A(a), .B(b), .Y(y));\n  // keep\nendmodule\n"
        );
    }
}
