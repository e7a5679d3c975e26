// SPDX-License-Identifier: Apache-2.0

//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "netreason",
    version,
    about = "Reason about gate-level netlists: corpora, alignment training, annotation, prompting and evaluation"
)]
pub struct Cli {
    /// Worker threads for per-design parallel work (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EncoderChoice {
    /// Message-passing encoder.
    Trained,
    /// Per-gate features only, no message passing.
    Weak,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic arithmetic benchmark corpus.
    GenCorpus(GenCorpusArgs),
    /// Parse netlists and write canonical text plus text-attributed graphs.
    Ingest(IngestArgs),
    /// Split a netlist into register-bounded subcircuits.
    Split(SplitArgs),
    /// Train the gate-function classifier head (and encoder when co-training).
    TrainPred(TrainPredArgs),
    /// Alignment stage 1: train the connector only.
    TrainAlign1(TrainAlignArgs),
    /// Alignment stage 2: train connector and decoder.
    TrainAlign2(TrainAlignArgs),
    /// Classify gates and write annotated netlists.
    Annotate(AnnotateArgs),
    /// Build chain-of-thought prompts for RTL recovery.
    Prompt(PromptArgs),
    /// Produce outputs with an LLM endpoint or a locally trained decoder.
    Generate(GenerateArgs),
    /// Score generated outputs against benchmark bundles.
    Eval(EvalArgs),
    /// Compare evaluation runs and training logs side by side.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub designs: usize,
    #[arg(long, default_value_t = 2)]
    pub min_width: u32,
    #[arg(long, default_value_t = 6)]
    pub max_width: u32,
    #[arg(long, default_value_t = 3)]
    pub max_blocks: usize,
    /// Replace a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long = "netlist", required = true, num_args = 1..)]
    pub netlists: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub netlist: PathBuf,
    /// Maximum gates per subcircuit.
    #[arg(long, default_value_t = 200)]
    pub cap: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainPredArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = EncoderChoice::Trained)]
    pub encoder: EncoderChoice,
    /// Keep the encoder fixed and train only the head.
    #[arg(long)]
    pub frozen_encoder: bool,
    /// Start from the encoder of an earlier `train-pred` run.
    #[arg(long)]
    pub encoder_ckpt: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub d_enc: usize,
    #[arg(long, default_value_t = 256)]
    pub hidden: usize,
    #[arg(long, default_value_t = 15)]
    pub epochs: usize,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 3e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainAlignArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Benchmark task whose golden text is the target (1 or 2).
    #[arg(long, default_value = "1")]
    pub task: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Stage-2 input: directory written by `train-align1`.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// JSON model configuration; ignored when `--init` is given.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replace the projected graph token with a learned null token.
    #[arg(long)]
    pub no_align: bool,
    #[arg(long, value_enum, default_value_t = EncoderChoice::Trained)]
    pub encoder: EncoderChoice,
    /// Encoder weights from a `train-pred` run.
    #[arg(long)]
    pub encoder_ckpt: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use only the first N designs.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Truncate target texts to at most this many bytes.
    #[arg(long)]
    pub max_target_bytes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    /// Directory written by `train-pred`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(
        long,
        conflicts_with = "netlists",
        required_unless_present = "netlists"
    )]
    pub corpus: Option<PathBuf>,
    #[arg(long = "netlist", num_args = 1..)]
    pub netlists: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Omit `(p=...)` confidences from the comments.
    #[arg(long)]
    pub no_confidence: bool,
}

#[derive(Debug, Args)]
pub struct PromptArgs {
    /// Directory written by `annotate`.
    #[arg(long, required_unless_present = "corpus")]
    pub annotated: Option<PathBuf>,
    /// Benchmark corpus; without `--annotated` this requires `--no-annotation`.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Leave gate-function comments out of the prompt.
    #[arg(long)]
    pub no_annotation: bool,
    /// JSON prompt template with `system` and `user` fields.
    #[arg(long)]
    pub template: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Directory written by `prompt` (LLM mode).
    #[arg(long, conflicts_with = "model")]
    pub prompts: Option<PathBuf>,
    /// Directory written by `train-align2` (local decoder mode).
    #[arg(long, requires = "corpus")]
    pub model: Option<PathBuf>,
    /// Benchmark corpus (local decoder mode).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value = "1")]
    pub task: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Outputs per design.
    #[arg(long, default_value_t = 1)]
    pub samples: usize,
    /// Sampling temperature for the local decoder; 0 decodes greedily.
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 256)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Endpoint configuration (TOML).
    #[arg(long, conflicts_with_all = ["mock_golden", "mock_replies"])]
    pub endpoint: Option<PathBuf>,
    /// Serve golden RTL from this corpus through an in-process mock endpoint.
    #[arg(long, conflicts_with = "mock_replies")]
    pub mock_golden: Option<PathBuf>,
    /// Serve replies from a JSON object `{design: reply}` through an
    /// in-process mock endpoint.
    #[arg(long)]
    pub mock_replies: Option<PathBuf>,
    /// Append one JSON record per LLM call.
    #[arg(long)]
    pub audit_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "3")]
    pub task: String,
    /// Directory written by `generate`.
    #[arg(long)]
    pub outputs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Run label copied into the report.
    #[arg(long, default_value = "default")]
    pub label: String,
    /// External simulator command with `{rtl}`, `{tb}` and `{out}` placeholders.
    #[arg(long)]
    pub sim_cmd: Option<String>,
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
    /// Endpoint configuration (TOML) for the judge and remote embeddings.
    #[arg(long)]
    pub endpoint: Option<PathBuf>,
    /// Ask the endpoint for a similarity judgment per output.
    #[arg(long)]
    pub judge: bool,
    #[arg(long)]
    pub judge_template: Option<PathBuf>,
    /// Use endpoint embeddings instead of local TF-IDF vectors.
    #[arg(long)]
    pub remote_embed: bool,
    /// Serve this fixed judge reply through an in-process mock endpoint.
    #[arg(long, conflicts_with = "endpoint")]
    pub mock_judge: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directories written by `eval`.
    #[arg(long = "run", num_args = 1..)]
    pub runs: Vec<PathBuf>,
    /// Directories written by `train-align1`, `train-align2` or `train-pred`.
    #[arg(long = "train", num_args = 1..)]
    pub trains: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}
