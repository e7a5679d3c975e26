// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};

use netreason_core::NetlistError;
use netreason_eval::EvalError;
use netreason_llm::LlmError;
use netreason_model::ModelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Module that raised the error.
    pub fn module(&self) -> &'static str {
        match self {
            CliError::Usage(_) | CliError::Io { .. } | CliError::Json { .. } => "cli",
            CliError::Netlist(_) => "netlist",
            CliError::Model(ModelError::Netlist(_)) => "netlist",
            CliError::Model(ModelError::Llm(_)) => "llm",
            CliError::Model(_) => "model",
            CliError::Llm(_) => "llm",
            CliError::Eval(EvalError::Netlist(_)) => "netlist",
            CliError::Eval(EvalError::Llm(_)) => "llm",
            CliError::Eval(EvalError::Model(_)) => "model",
            CliError::Eval(_) => "eval",
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "Usage",
            CliError::Io { .. } => "Io",
            CliError::Json { .. } => "Json",
            CliError::Netlist(e) => e.code(),
            CliError::Model(e) => e.code(),
            CliError::Llm(e) => e.code(),
            CliError::Eval(e) => e.code(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.module() {
            "cli" if matches!(self, CliError::Usage(_)) => 2,
            "cli" => 3,
            "netlist" => 4,
            "model" => 5,
            "llm" => 6,
            _ => 7,
        }
    }

    /// `error[<module>::<code>]: <message>`
    pub fn line(&self) -> String {
        format!("error[{}::{}]: {}", self.module(), self.code(), self)
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
