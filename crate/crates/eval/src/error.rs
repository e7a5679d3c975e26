// SPDX-License-Identifier: Apache-2.0

use std::io;

use netreason_core::NetlistError;
use netreason_llm::LlmError;
use netreason_model::ModelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("reference text is empty")]
    EmptyReference,
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("judge reply contains no number: {0:?}")]
    UnparseableJudgment(String),
    #[error("simulator not found: {0}")]
    SimulatorNotFound(String),
    #[error("simulation exceeded {0} s")]
    Timeout(u64),
    #[error("invalid counts n={n} c={c} k={k}")]
    InvalidCounts { n: u64, c: u64, k: u64 },
    #[error("no output for design `{0}`")]
    MissingOutput(String),
    #[error("bundle {design}: {detail}")]
    Bundle { design: String, detail: String },
    #[error("rtl: {0}")]
    Rtl(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

impl EvalError {
    pub fn code(&self) -> &'static str {
        match self {
            EvalError::EmptyReference => "EmptyReference",
            EvalError::ProviderUnavailable(_) => "ProviderUnavailable",
            EvalError::UnparseableJudgment(_) => "UnparseableJudgment",
            EvalError::SimulatorNotFound(_) => "SimulatorNotFound",
            EvalError::Timeout(_) => "Timeout",
            EvalError::InvalidCounts { .. } => "InvalidCounts",
            EvalError::MissingOutput(_) => "MissingOutput",
            EvalError::Bundle { .. } => "InvalidBundle",
            EvalError::Rtl(_) => "RtlError",
            EvalError::Csv(_) => "Csv",
            EvalError::Json(_) => "Json",
            EvalError::Netlist(e) => e.code(),
            EvalError::Model(e) => e.code(),
            EvalError::Llm(e) => e.code(),
            EvalError::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, EvalError>;
