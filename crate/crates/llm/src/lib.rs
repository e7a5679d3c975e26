// SPDX-License-Identifier: Apache-2.0

//! Client for OpenAI-style chat-completion and embedding endpoints.
//!
//! Wire format (JSON over HTTP POST):
//!
//! - `{base_url}/chat/completions`, request
//!   `{"model", "messages": [{"role", "content"}], "temperature", "max_tokens"}`,
//!   response `{"choices": [{"message": {"content"}}]}`.
//! - `{base_url}/embeddings`, request `{"model", "input": [text]}`,
//!   response `{"data": [{"index", "embedding": [f64]}]}`.
//!
//! The bearer credential is read from an environment variable only.

mod audit;
mod client;
mod config;
mod limiter;
pub mod mock;

pub use audit::{AuditLog, AuditRecord};
pub use client::{ChatMessage, LlmClient};
pub use config::EndpointConfig;
pub use limiter::InFlightLimiter;
pub use mock::{MockRequest, MockResponse, MockServer};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("endpoint unreachable: {0}")]
    EndpointUnreachable(String),
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("config: {0}")]
    Config(String),
    #[error("audit log: {0}")]
    Audit(#[from] std::io::Error),
}

impl LlmError {
    pub fn code(&self) -> &'static str {
        match self {
            LlmError::EndpointUnreachable(_) => "EndpointUnreachable",
            LlmError::AuthFailure(_) => "AuthFailure",
            LlmError::MalformedResponse(_) => "MalformedResponse",
            LlmError::RateLimited { .. } => "RateLimited",
            LlmError::Config(_) => "Config",
            LlmError::Audit(_) => "Audit",
        }
    }
}

pub type Result<T> = std::result::Result<T, LlmError>;
