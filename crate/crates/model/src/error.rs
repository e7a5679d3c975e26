// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("sequence of length {len} exceeds context {context}")]
    ContextOverflow { len: usize, context: usize },
    #[error("every position is masked out of the loss")]
    AllMasked,
    #[error("no labeled gates")]
    NoLabels,
    #[error("target text is empty")]
    EmptyTarget,
    #[error("frozen parameters `{0}` changed during training")]
    FrozenViolation(String),
    #[error("no prediction for gate `{0}`")]
    MissingPrediction(String),
    #[error("label code {0} is outside 0..5")]
    BadLabel(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Netlist(#[from] netreason_core::NetlistError),
    #[error(transparent)]
    Llm(#[from] netreason_llm::LlmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ModelError {
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::ShapeMismatch(_) => "ShapeMismatch",
            ModelError::ContextOverflow { .. } => "ContextOverflow",
            ModelError::AllMasked => "AllMasked",
            ModelError::NoLabels => "NoLabels",
            ModelError::EmptyTarget => "EmptyTarget",
            ModelError::FrozenViolation(_) => "FrozenViolation",
            ModelError::MissingPrediction(_) => "MissingPrediction",
            ModelError::BadLabel(_) => "BadLabel",
            ModelError::Checkpoint(_) => "Checkpoint",
            ModelError::Netlist(e) => e.code(),
            ModelError::Llm(e) => e.code(),
            ModelError::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, ModelError>;
