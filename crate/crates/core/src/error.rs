// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors raised while building or validating netlists and their graphs.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetlistError {
    #[error("syntax error at {line}:{col}: {msg}")]
    SyntaxError {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("unknown cell type `{0}`")]
    UnknownCell(String),
    #[error("net `{0}` has more than one driver")]
    MultipleDrivers(String),
    #[error("undeclared net `{0}`")]
    UndeclaredNet(String),
    #[error("`{0}` is declared more than once")]
    DuplicateDeclaration(String),
    #[error("instance `{instance}`: {detail}")]
    PinMismatch { instance: String, detail: String },
    #[error("cell `{0}` is sequential")]
    SequentialCell(String),
    #[error("expression support has {0} variables, limit is 16")]
    SupportTooLarge(usize),
    #[error("combinational loop through {}", .0.join(" -> "))]
    CombinationalLoop(Vec<String>),
    #[error("cell library line {line}: {msg}")]
    Library { line: usize, msg: String },
}

impl NetlistError {
    /// Stable short code, used by the CLI for categorized error lines.
    pub fn code(&self) -> &'static str {
        match self {
            NetlistError::SyntaxError { .. } => "SyntaxError",
            NetlistError::UnknownCell(_) => "UnknownCell",
            NetlistError::MultipleDrivers(_) => "MultipleDrivers",
            NetlistError::UndeclaredNet(_) => "UndeclaredNet",
            NetlistError::DuplicateDeclaration(_) => "DuplicateDeclaration",
            NetlistError::PinMismatch { .. } => "PinMismatch",
            NetlistError::SequentialCell(_) => "SequentialCell",
            NetlistError::SupportTooLarge(_) => "SupportTooLarge",
            NetlistError::CombinationalLoop(_) => "CombinationalLoop",
            NetlistError::Library { .. } => "Library",
        }
    }
}

pub type Result<T> = std::result::Result<T, NetlistError>;
