// SPDX-License-Identifier: Apache-2.0

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{LlmError, Result};

/// Endpoint settings. Everything except the credential may come from a TOML
/// file; the credential is read from the variable named by `api_key_env`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    pub embedding_model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
    pub api_key_env: String,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "gpt-4o".into(),
            embedding_model: "text-embedding-3-small".into(),
            temperature: 0.0,
            max_tokens: 2048,
            timeout_secs: 120,
            max_attempts: 3,
            backoff_ms: 500,
            max_in_flight: 4,
            api_key_env: "NETREASON_API_KEY".into(),
        }
    }
}

impl EndpointConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LlmError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// The credential from the environment, if set and non-empty.
    pub fn api_key_from_env(&self) -> Option<String> {
        std::env::var(&self.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_toml_keeps_defaults() {
        let c = EndpointConfig::from_toml("model = \"m\"\nmax_attempts = 5\n").unwrap();
        assert_eq!(c.model, "m");
        assert_eq!(c.max_attempts, 5);
        assert_eq!(c.temperature, 0.0);
    }

    #[test]
    fn credential_fields_are_rejected() {
        assert!(EndpointConfig::from_toml("api_key = \"secret\"\n").is_err());
    }
}
