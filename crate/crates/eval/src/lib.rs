// SPDX-License-Identifier: Apache-2.0

//! Evaluation harness: benchmark bundles, a synthetic arithmetic corpus,
//! text-similarity metrics, RTL testbench checks, pass@k and run reports.

pub mod bundle;
pub mod corpus;
pub mod error;
pub mod passk;
pub mod report;
pub mod rtl;
pub mod similarity;
pub mod text;

pub use bundle::{BenchTask, BenchmarkBundle};
pub use error::{EvalError, Result};
pub use passk::pass_at_k;
pub use report::{evaluate_run, MetricsConfig, RunReport, Scorers, TextScore};
pub use rtl::{extract_rtl, run_testbench, RtlResult, SimConfig};
pub use text::{bleu, rouge_l, rouge_n, Prf};
