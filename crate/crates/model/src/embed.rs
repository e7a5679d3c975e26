// SPDX-License-Identifier: Apache-2.0

//! Graph-conditioned text generation: a connector projects the pooled graph
//! embedding into one soft token, which a small causal transformer reads
//! alongside byte tokens of the instruction and I/O signal list.
//!
//! Sequence layout:
//!
//! ```text
//! BOS <instruction> \n <io signals> \n GRAPH \n <target> EOS
//! ```
//!
//! The loss covers the target bytes and the closing EOS only.

use std::rc::Rc;

use netreason_core::{build_tag_graph, extract_io_signals, CellLibrary, Netlist, TaGraph};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{encode, EncoderConfig, EncoderParams};
use crate::error::{ModelError, Result};
use crate::params::{param_hash, seeded_rng, uniform, Adam, Parameters};
use crate::tape::{Mat, Tape, Var};

pub const BYTE_VOCAB: usize = 256;
pub const PAD: usize = 256;
pub const BOS: usize = 257;
pub const EOS: usize = 258;
pub const GRAPH: usize = 259;
pub const VOCAB: usize = 260;

pub fn tokenize(text: &str) -> Vec<usize> {
    text.bytes().map(usize::from).collect()
}

/// Bytes back to text; special tokens are dropped.
pub fn detokenize(tokens: &[usize]) -> String {
    let bytes: Vec<u8> = tokens
        .iter()
        .filter(|&&t| t < BYTE_VOCAB)
        .map(|&t| t as u8)
        .collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    FuncDesc,
    ImplDetail,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::FuncDesc => "func-desc",
            Task::ImplDetail => "impl-detail",
        }
    }

    pub fn parse(s: &str) -> Option<Task> {
        match s {
            "func-desc" | "task1" | "1" => Some(Task::FuncDesc),
            "impl-detail" | "task2" | "2" => Some(Task::ImplDetail),
            _ => None,
        }
    }

    pub fn instruction(&self) -> &'static str {
        match self {
            Task::FuncDesc => "Given this circuit netlist, describe the interface, purpose, functionality, and constraints of the design.",
            Task::ImplDetail => "Given this circuit netlist, explain the combinational logic, sequential behavior, and control flow of the design.",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionPair {
    pub task: Task,
    pub instruction: String,
    pub io_text: String,
    pub target: String,
}

pub fn assemble_instruction(n: &Netlist, task: Task, target: &str) -> Result<InstructionPair> {
    if target.trim().is_empty() {
        return Err(ModelError::EmptyTarget);
    }
    Ok(InstructionPair {
        task,
        instruction: task.instruction().to_string(),
        io_text: extract_io_signals(n),
        target: target.to_string(),
    })
}

impl InstructionPair {
    /// Everything up to and including the newline after the graph slot.
    pub fn prompt_tokens(&self) -> Vec<usize> {
        let mut t = vec![BOS];
        t.extend(tokenize(&self.instruction));
        t.push(b'\n' as usize);
        t.extend(tokenize(&self.io_text));
        t.push(b'\n' as usize);
        t.push(GRAPH);
        t.push(b'\n' as usize);
        t
    }

    pub fn graph_slot(&self) -> usize {
        self.prompt_tokens()
            .iter()
            .position(|&t| t == GRAPH)
            .unwrap()
    }

    /// Prompt, target bytes and EOS.
    pub fn full_tokens(&self) -> Vec<usize> {
        let mut t = self.prompt_tokens();
        t.extend(tokenize(&self.target));
        t.push(EOS);
        t
    }

    pub fn graph_slot_count(&self) -> usize {
        self.full_tokens().iter().filter(|&&t| t == GRAPH).count()
    }
}

/// Model inputs and next-token labels for one pair: `inputs[t]` predicts
/// `labels[t]`, and `mask[t]` selects the target span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSequence {
    pub inputs: Vec<usize>,
    pub labels: Vec<usize>,
    pub mask: Vec<bool>,
}

impl TrainingSequence {
    pub fn new(pair: &InstructionPair) -> Self {
        let full = pair.full_tokens();
        let prompt_len = pair.prompt_tokens().len();
        let inputs = full[..full.len() - 1].to_vec();
        let labels = full[1..].to_vec();
        let mask = (1..full.len()).map(|i| i >= prompt_len).collect();
        TrainingSequence {
            inputs,
            labels,
            mask,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConnectorConfig {
    /// Layer widths from the encoder width to the decoder width.
    pub dims: Vec<usize>,
    pub seed: u64,
}

impl Default for ConnectorConfig {
    fn default() -> Self {
        ConnectorConfig {
            dims: vec![64, 128, 128],
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Mat,
    pub b: Mat,
}

/// MLP with tanh between layers, plus the learned stand-in token used when
/// alignment is ablated.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectorParams {
    pub layers: Vec<Linear>,
    pub null_token: Mat,
}

impl ConnectorParams {
    pub fn init(cfg: &ConnectorConfig) -> Self {
        let mut rng = seeded_rng(cfg.seed);
        let layers = cfg
            .dims
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Linear {
                    w: uniform(&mut rng, w[0], w[1], bound),
                    b: Mat::zeros((1, w[1])),
                }
            })
            .collect();
        let d_out = *cfg.dims.last().expect("connector needs at least one width");
        ConnectorParams {
            layers,
            null_token: uniform(&mut rng, 1, d_out, 0.1),
        }
    }

    pub fn d_in(&self) -> usize {
        self.layers
            .first()
            .map_or(self.null_token.ncols(), |l| l.w.nrows())
    }

    pub fn d_out(&self) -> usize {
        self.null_token.ncols()
    }
}

impl Parameters for ConnectorParams {
    fn names(&self) -> Vec<String> {
        let mut n = Vec::new();
        for k in 0..self.layers.len() {
            n.push(format!("conn.{k}.w"));
            n.push(format!("conn.{k}.b"));
        }
        n.push("conn.null".into());
        n
    }

    fn tensors(&self) -> Vec<&Mat> {
        let mut t: Vec<&Mat> = self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect();
        t.push(&self.null_token);
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut t: Vec<&mut Mat> = self
            .layers
            .iter_mut()
            .flat_map(|l| [&mut l.w, &mut l.b])
            .collect();
        t.push(&mut self.null_token);
        t
    }
}

fn project_on_tape(tape: &mut Tape, vars: &[Var], c: &ConnectorParams, ng: Var) -> Var {
    let mut h = ng;
    for (k, _) in c.layers.iter().enumerate() {
        let z = tape.matmul(h, vars[2 * k]);
        let z = tape.add_row(z, vars[2 * k + 1]);
        h = if k + 1 < c.layers.len() {
            tape.tanh(z)
        } else {
            z
        };
    }
    h
}

/// Projects a graph embedding to one decoder-width token.
pub fn project(ng: &[f64], c: &ConnectorParams) -> Result<Vec<f64>> {
    if ng.len() != c.d_in() {
        return Err(ModelError::ShapeMismatch(format!(
            "graph embedding has {} entries, connector expects {}",
            ng.len(),
            c.d_in()
        )));
    }
    let mut tape = Tape::new();
    let vars = c.bind(&mut tape);
    let x = tape.leaf(Mat::from_shape_vec((1, ng.len()), ng.to_vec()).unwrap());
    let h = project_on_tape(&mut tape, &vars, c, x);
    Ok(tape.value(h).row(0).to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub d_model: usize,
    pub blocks: usize,
    pub heads: usize,
    pub context: usize,
    pub ffn_mult: usize,
    pub tied_output: bool,
    pub seed: u64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            d_model: 128,
            blocks: 2,
            heads: 4,
            context: 512,
            ffn_mult: 4,
            tied_output: false,
            seed: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub ln1_g: Mat,
    pub ln1_b: Mat,
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
    pub wo: Mat,
    pub ln2_g: Mat,
    pub ln2_b: Mat,
    pub w1: Mat,
    pub b1: Mat,
    pub w2: Mat,
    pub b2: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub heads: usize,
    pub tok_emb: Mat,
    pub pos_emb: Mat,
    pub blocks: Vec<Block>,
    pub lnf_g: Mat,
    pub lnf_b: Mat,
    /// `None` when the output projection is tied to `tok_emb`.
    pub w_out: Option<Mat>,
    pub b_out: Mat,
}

impl DecoderParams {
    pub fn init(cfg: &DecoderConfig) -> Self {
        assert!(
            cfg.heads > 0 && cfg.d_model % cfg.heads == 0,
            "d_model must divide into heads"
        );
        let mut rng = seeded_rng(cfg.seed);
        let d = cfg.d_model;
        let f = d * cfg.ffn_mult;
        let wb = 1.0 / (d as f64).sqrt();
        let res = wb / ((2 * cfg.blocks.max(1)) as f64).sqrt();
        let blocks = (0..cfg.blocks)
            .map(|_| Block {
                ln1_g: Mat::ones((1, d)),
                ln1_b: Mat::zeros((1, d)),
                wq: uniform(&mut rng, d, d, wb),
                wk: uniform(&mut rng, d, d, wb),
                wv: uniform(&mut rng, d, d, wb),
                wo: uniform(&mut rng, d, d, res),
                ln2_g: Mat::ones((1, d)),
                ln2_b: Mat::zeros((1, d)),
                w1: uniform(&mut rng, d, f, wb),
                b1: Mat::zeros((1, f)),
                w2: uniform(
                    &mut rng,
                    f,
                    d,
                    1.0 / (f as f64).sqrt() / ((2 * cfg.blocks.max(1)) as f64).sqrt(),
                ),
                b2: Mat::zeros((1, d)),
            })
            .collect();
        DecoderParams {
            heads: cfg.heads,
            tok_emb: uniform(&mut rng, VOCAB, d, 0.1),
            pos_emb: uniform(&mut rng, cfg.context, d, 0.1),
            blocks,
            lnf_g: Mat::ones((1, d)),
            lnf_b: Mat::zeros((1, d)),
            w_out: (!cfg.tied_output).then(|| uniform(&mut rng, d, VOCAB, wb)),
            b_out: Mat::zeros((1, VOCAB)),
        }
    }

    pub fn d_model(&self) -> usize {
        self.tok_emb.ncols()
    }

    pub fn context(&self) -> usize {
        self.pos_emb.nrows()
    }
}

impl Parameters for DecoderParams {
    fn names(&self) -> Vec<String> {
        let mut n = vec!["dec.tok_emb".to_string(), "dec.pos_emb".to_string()];
        for k in 0..self.blocks.len() {
            for p in [
                "ln1_g", "ln1_b", "wq", "wk", "wv", "wo", "ln2_g", "ln2_b", "w1", "b1", "w2", "b2",
            ] {
                n.push(format!("dec.{k}.{p}"));
            }
        }
        n.extend(["dec.lnf_g".to_string(), "dec.lnf_b".to_string()]);
        if self.w_out.is_some() {
            n.push("dec.w_out".into());
        }
        n.push("dec.b_out".into());
        n
    }

    fn tensors(&self) -> Vec<&Mat> {
        let mut t = vec![&self.tok_emb, &self.pos_emb];
        for b in &self.blocks {
            t.extend([
                &b.ln1_g, &b.ln1_b, &b.wq, &b.wk, &b.wv, &b.wo, &b.ln2_g, &b.ln2_b, &b.w1, &b.b1,
                &b.w2, &b.b2,
            ]);
        }
        t.extend([&self.lnf_g, &self.lnf_b]);
        if let Some(w) = &self.w_out {
            t.push(w);
        }
        t.push(&self.b_out);
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut t = vec![&mut self.tok_emb, &mut self.pos_emb];
        for b in &mut self.blocks {
            t.extend([
                &mut b.ln1_g,
                &mut b.ln1_b,
                &mut b.wq,
                &mut b.wk,
                &mut b.wv,
                &mut b.wo,
                &mut b.ln2_g,
                &mut b.ln2_b,
                &mut b.w1,
                &mut b.b1,
                &mut b.w2,
                &mut b.b2,
            ]);
        }
        t.extend([&mut self.lnf_g, &mut self.lnf_b]);
        if let Some(w) = &mut self.w_out {
            t.push(w);
        }
        t.push(&mut self.b_out);
        t
    }
}

/// Input rows for the decoder, before positional embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftTokenSequence {
    pub rows: Mat,
}

impl SoftTokenSequence {
    /// Embeds `tokens`, placing `graph_token` at every GRAPH position.
    pub fn from_tokens(tokens: &[usize], graph_token: &[f64], d: &DecoderParams) -> Result<Self> {
        let dm = d.d_model();
        if graph_token.len() != dm {
            return Err(ModelError::ShapeMismatch(format!(
                "graph token width {} vs d_model {dm}",
                graph_token.len()
            )));
        }
        let mut rows = Mat::zeros((tokens.len(), dm));
        for (r, &t) in tokens.iter().enumerate() {
            if t == GRAPH {
                rows.row_mut(r)
                    .assign(&ndarray::ArrayView1::from(graph_token));
            } else {
                rows.row_mut(r).assign(&d.tok_emb.row(t));
            }
        }
        Ok(SoftTokenSequence { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }
}

/// Decoder stack over already-embedded rows `x` (T x d_model).
fn decoder_on_tape(tape: &mut Tape, v: &[Var], d: &DecoderParams, x: Var) -> Result<Var> {
    let (t_len, dm) = tape.shape(x);
    if t_len > d.context() {
        return Err(ModelError::ContextOverflow {
            len: t_len,
            context: d.context(),
        });
    }
    if dm != d.d_model() {
        return Err(ModelError::ShapeMismatch(format!(
            "input width {dm} vs d_model {}",
            d.d_model()
        )));
    }
    let pos = tape.gather_rows(v[1], Rc::new((0..t_len).collect()));
    let mut x = tape.add(x, pos);
    let dh = dm / d.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    for k in 0..d.blocks.len() {
        let p = &v[2 + 12 * k..2 + 12 * (k + 1)];
        let h = tape.layer_norm(x, p[0], p[1]);
        let q = tape.matmul(h, p[2]);
        let kk = tape.matmul(h, p[3]);
        let vv = tape.matmul(h, p[4]);
        let heads: Vec<Var> = (0..d.heads)
            .map(|hd| {
                let qh = tape.slice_cols(q, hd * dh, dh);
                let kh = tape.slice_cols(kk, hd * dh, dh);
                let vh = tape.slice_cols(vv, hd * dh, dh);
                tape.causal_attention(qh, kh, vh, scale)
            })
            .collect();
        let cat = tape.concat_cols(&heads);
        let o = tape.matmul(cat, p[5]);
        x = tape.add(x, o);
        let h2 = tape.layer_norm(x, p[6], p[7]);
        let f = tape.matmul(h2, p[8]);
        let f = tape.add_row(f, p[9]);
        let f = tape.gelu(f);
        let f = tape.matmul(f, p[10]);
        let f = tape.add_row(f, p[11]);
        x = tape.add(x, f);
    }
    let base = 2 + 12 * d.blocks.len();
    let xf = tape.layer_norm(x, v[base], v[base + 1]);
    let (w_out, b_out) = if d.w_out.is_some() {
        (v[base + 2], v[base + 3])
    } else {
        (tape.transpose(v[0]), v[base + 2])
    };
    let logits = tape.matmul(xf, w_out);
    Ok(tape.add_row(logits, b_out))
}

/// Per-position logits (T x VOCAB).
pub fn forward(seq: &SoftTokenSequence, d: &DecoderParams) -> Result<Mat> {
    let mut tape = Tape::new();
    let v = d.bind(&mut tape);
    let x = tape.leaf(seq.rows.clone());
    let logits = decoder_on_tape(&mut tape, &v, d, x)?;
    Ok(tape.value(logits).clone())
}

/// Mean negative log-likelihood of `targets` over positions with `mask` set.
pub fn ar_loss(logits: &Mat, targets: &[usize], mask: &[bool]) -> Result<f64> {
    if targets.len() != logits.nrows() || mask.len() != logits.nrows() {
        return Err(ModelError::ShapeMismatch(format!(
            "{} logit rows, {} targets, {} mask entries",
            logits.nrows(),
            targets.len(),
            mask.len()
        )));
    }
    let labels = masked_labels(targets, mask)?;
    let mut tape = Tape::new();
    let z = tape.leaf(logits.clone());
    let l = tape.cross_entropy(z, labels);
    Ok(tape.value(l)[[0, 0]])
}

fn masked_labels(targets: &[usize], mask: &[bool]) -> Result<Rc<Vec<Option<usize>>>> {
    if !mask.iter().any(|m| *m) {
        return Err(ModelError::AllMasked);
    }
    Ok(Rc::new(
        targets
            .iter()
            .zip(mask)
            .map(|(&t, &m)| m.then_some(t))
            .collect(),
    ))
}

/// Serializable description of the encoder, connector and decoder stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct AlignConfig {
    pub encoder: EncoderConfig,
    pub connector: ConnectorConfig,
    pub decoder: DecoderConfig,
    /// Replace the projected graph token with a learned null embedding.
    pub no_align: bool,
}

impl AlignConfig {
    /// Keeps connector end widths consistent with the encoder and decoder.
    pub fn normalized(mut self) -> Self {
        let last = self.connector.dims.len().max(2) - 1;
        self.connector.dims.resize(last + 1, self.decoder.d_model);
        self.connector.dims[0] = self.encoder.d_enc;
        self.connector.dims[last] = self.decoder.d_model;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedModel {
    pub encoder: EncoderParams,
    pub connector: ConnectorParams,
    pub decoder: DecoderParams,
    pub no_align: bool,
}

impl AlignedModel {
    pub fn init(cfg: &AlignConfig) -> Self {
        let cfg = cfg.clone().normalized();
        AlignedModel {
            encoder: EncoderParams::init(&cfg.encoder),
            connector: ConnectorParams::init(&cfg.connector),
            decoder: DecoderParams::init(&cfg.decoder),
            no_align: cfg.no_align,
        }
    }

    /// The soft token placed in the graph slot.
    pub fn graph_token(&self, graph: &TaGraph) -> Result<Vec<f64>> {
        if self.no_align {
            return Ok(self.connector.null_token.row(0).to_vec());
        }
        let e = encode(graph, &self.encoder)?;
        project(&e.graph, &self.connector)
    }
}

/// A pair together with the graph of its netlist.
#[derive(Debug, Clone)]
pub struct AlignExample {
    pub pair: InstructionPair,
    pub graph: TaGraph,
}

impl AlignExample {
    pub fn new(n: &Netlist, lib: &CellLibrary, task: Task, target: &str) -> Result<Self> {
        Ok(AlignExample {
            pair: assemble_instruction(n, task, target)?,
            graph: build_tag_graph(n, lib)?,
        })
    }
}

/// Loss of one sequence and gradients for (connector, decoder).
///
/// `graph_embedding` is ignored when `model.no_align` is set.
pub fn sequence_loss_grad(
    model: &AlignedModel,
    seq: &TrainingSequence,
    graph_embedding: &[f64],
) -> Result<(f64, ConnectorParams, DecoderParams)> {
    let labels = masked_labels(&seq.labels, &seq.mask)?;
    if seq.inputs.len() > model.decoder.context() {
        return Err(ModelError::ContextOverflow {
            len: seq.inputs.len(),
            context: model.decoder.context(),
        });
    }
    let mut tape = Tape::new();
    let cv = model.connector.bind(&mut tape);
    let dv = model.decoder.bind(&mut tape);
    let slot = if model.no_align {
        cv[cv.len() - 1]
    } else {
        if graph_embedding.len() != model.connector.d_in() {
            return Err(ModelError::ShapeMismatch(format!(
                "graph embedding width {} vs connector input {}",
                graph_embedding.len(),
                model.connector.d_in()
            )));
        }
        let ng = tape.leaf(
            Mat::from_shape_vec((1, graph_embedding.len()), graph_embedding.to_vec()).unwrap(),
        );
        project_on_tape(&mut tape, &cv, &model.connector, ng)
    };
    let x = embed_on_tape(&mut tape, dv[0], &seq.inputs, slot);
    let logits = decoder_on_tape(&mut tape, &dv, &model.decoder, x)?;
    let loss = tape.cross_entropy(logits, labels);
    let value = tape.value(loss)[[0, 0]];
    let grads = tape.backward(loss);
    Ok((
        value,
        model.connector.grads_from(&cv, &grads),
        model.decoder.grads_from(&dv, &grads),
    ))
}

/// Token rows gathered from the embedding table, with `slot` spliced in at
/// GRAPH positions.
fn embed_on_tape(tape: &mut Tape, table: Var, tokens: &[usize], slot: Var) -> Var {
    let mut parts = Vec::new();
    let mut run: Vec<usize> = Vec::new();
    for &t in tokens {
        if t == GRAPH {
            if !run.is_empty() {
                parts.push(tape.gather_rows(table, Rc::new(std::mem::take(&mut run))));
            }
            parts.push(slot);
        } else {
            run.push(t);
        }
    }
    if !run.is_empty() {
        parts.push(tape.gather_rows(table, Rc::new(run)));
    }
    tape.concat_rows(&parts)
}

/// Loss of one sequence without gradients.
pub fn sequence_loss(
    model: &AlignedModel,
    seq: &TrainingSequence,
    graph_embedding: &[f64],
) -> Result<f64> {
    let token = if model.no_align {
        model.connector.null_token.row(0).to_vec()
    } else {
        project(graph_embedding, &model.connector)?
    };
    let soft = SoftTokenSequence::from_tokens(&seq.inputs, &token, &model.decoder)?;
    ar_loss(&forward(&soft, &model.decoder)?, &seq.labels, &seq.mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    /// Connector only.
    One,
    /// Connector and decoder.
    Two,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Overrides `epochs` when set.
    pub steps: Option<usize>,
    pub seed: u64,
    pub clip_norm: Option<f64>,
    /// Hash frozen parameters after every step instead of only at the end.
    pub verify_every_step: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            epochs: 1,
            steps: None,
            seed: 0,
            clip_norm: Some(1.0),
            verify_every_step: cfg!(debug_assertions),
        }
    }
}

impl TrainConfig {
    pub fn stage1() -> Self {
        Self::default()
    }

    pub fn stage2() -> Self {
        TrainConfig {
            lr: 3e-4,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// (step, loss) for every optimizer step; steps count from 1.
    pub losses: Vec<(usize, f64)>,
    pub epoch_means: Vec<f64>,
    pub param_hashes_before: Vec<(String, String)>,
    pub param_hashes_after: Vec<(String, String)>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().map(|(_, l)| *l)
    }

    /// Mean of the last `k` step losses.
    pub fn tail_mean(&self, k: usize) -> Option<f64> {
        let n = self.losses.len();
        if n == 0 {
            return None;
        }
        let tail = &self.losses[n.saturating_sub(k)..];
        Some(tail.iter().map(|(_, l)| l).sum::<f64>() / tail.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,loss\n");
        for (step, loss) in &self.losses {
            s.push_str(&format!("{step},{loss}\n"));
        }
        s
    }
}

fn hashes(model: &AlignedModel) -> Vec<(String, String)> {
    vec![
        ("encoder".into(), param_hash(&model.encoder)),
        ("connector".into(), param_hash(&model.connector)),
        ("decoder".into(), param_hash(&model.decoder)),
    ]
}

fn check_frozen(stage: Stage, before: &[(String, String)], model: &AlignedModel) -> Result<()> {
    let now = hashes(model);
    for ((name, h0), (_, h1)) in before.iter().zip(&now) {
        let frozen = match stage {
            Stage::One => name != "connector",
            Stage::Two => name == "encoder",
        };
        if frozen && h0 != h1 {
            return Err(ModelError::FrozenViolation(name.clone()));
        }
    }
    Ok(())
}

/// Trains the parameters unfrozen at `stage` with Adam over a seeded
/// shuffled order of `data`, one example per step.
pub fn train_stage(
    stage: Stage,
    data: &[AlignExample],
    model: &mut AlignedModel,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let mut report = TrainReport {
        param_hashes_before: hashes(model),
        ..TrainReport::default()
    };
    if data.is_empty() {
        report.param_hashes_after = hashes(model);
        return Ok(report);
    }
    let seqs: Vec<TrainingSequence> = data
        .iter()
        .map(|e| TrainingSequence::new(&e.pair))
        .collect();
    let embeddings: Vec<Vec<f64>> = if model.no_align {
        vec![Vec::new(); data.len()]
    } else {
        data.iter()
            .map(|e| encode(&e.graph, &model.encoder).map(|s| s.graph))
            .collect::<Result<_>>()?
    };
    let total = cfg.steps.unwrap_or(cfg.epochs * data.len());
    let mut rng = seeded_rng(cfg.seed);
    let mut opt = Adam::new(cfg.lr);
    opt.clip_norm = cfg.clip_norm;
    let mut order: Vec<usize> = Vec::new();
    let mut epoch_sum = 0.0;
    let mut epoch_n = 0;
    for step in 1..=total {
        if order.is_empty() {
            order = (0..data.len()).collect();
            order.shuffle(&mut rng);
            order.reverse();
        }
        let i = order.pop().unwrap();
        let (loss, gc, gd) = sequence_loss_grad(model, &seqs[i], &embeddings[i])?;
        match stage {
            Stage::One => opt.step(&mut model.connector, &gc),
            Stage::Two => {
                let mut joint = (model.connector.clone(), model.decoder.clone());
                opt.step(&mut joint, &(gc, gd));
                model.connector = joint.0;
                model.decoder = joint.1;
            }
        }
        if cfg.verify_every_step {
            check_frozen(stage, &report.param_hashes_before, model)?;
        }
        report.losses.push((step, loss));
        epoch_sum += loss;
        epoch_n += 1;
        if order.is_empty() || step == total {
            let mean = epoch_sum / epoch_n as f64;
            log::info!(
                "stage {stage:?}: epoch {} mean loss {mean:.4}",
                report.epoch_means.len() + 1
            );
            report.epoch_means.push(mean);
            epoch_sum = 0.0;
            epoch_n = 0;
        }
    }
    check_frozen(stage, &report.param_hashes_before, model)?;
    report.param_hashes_after = hashes(model);
    Ok(report)
}

pub fn train_stage1(
    data: &[AlignExample],
    model: &mut AlignedModel,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    train_stage(Stage::One, data, model, cfg)
}

pub fn train_stage2(
    data: &[AlignExample],
    model: &mut AlignedModel,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    train_stage(Stage::Two, data, model, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Decoding {
    Greedy,
    Sample { temperature: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub decoding: Decoding,
    pub max_len: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            decoding: Decoding::Greedy,
            max_len: 256,
        }
    }
}

/// Generates text for `prompt` (its `target` is ignored) conditioned on `graph`.
pub fn generate_for(
    prompt: &InstructionPair,
    graph: &TaGraph,
    model: &AlignedModel,
    dc: &DecodeConfig,
) -> Result<String> {
    let token = model.graph_token(graph)?;
    let mut tokens = prompt.prompt_tokens();
    let start = tokens.len();
    let mut rng = match dc.decoding {
        Decoding::Sample { seed, .. } => Some(seeded_rng(seed)),
        Decoding::Greedy => None,
    };
    while tokens.len() - start < dc.max_len && tokens.len() < model.decoder.context() {
        let soft = SoftTokenSequence::from_tokens(&tokens, &token, &model.decoder)?;
        let logits = forward(&soft, &model.decoder)?;
        let last = logits.row(logits.nrows() - 1);
        let next = match (dc.decoding, rng.as_mut()) {
            (Decoding::Sample { temperature, .. }, Some(r)) if temperature > 0.0 => {
                sample(last.to_vec(), temperature, r)
            }
            _ => argmax(last.iter().copied()),
        };
        if next == EOS {
            break;
        }
        tokens.push(next);
    }
    Ok(detokenize(&tokens[start..]))
}

pub fn generate(
    n: &Netlist,
    lib: &CellLibrary,
    task: Task,
    model: &AlignedModel,
    dc: &DecodeConfig,
) -> Result<String> {
    let prompt = InstructionPair {
        task,
        instruction: task.instruction().to_string(),
        io_text: extract_io_signals(n),
        target: String::new(),
    };
    generate_for(&prompt, &build_tag_graph(n, lib)?, model, dc)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(xs: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in xs.enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best.0
}

fn sample<R: Rng>(logits: Vec<f64>, temperature: f64, rng: &mut R) -> usize {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits
        .iter()
        .map(|z| ((z - m) / temperature).exp())
        .collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, wi) in w.iter().enumerate() {
        u -= wi;
        if u <= 0.0 {
            return i;
        }
    }
    w.len() - 1
}
