// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::audit::{AuditLog, AuditRecord};
use crate::config::EndpointConfig;
use crate::limiter::InFlightLimiter;
use crate::{LlmError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: impl Into<String>, content: impl Into<String>) -> Self {
        ChatMessage {
            role: role.into(),
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new("system", content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new("user", content)
    }
}

/// Blocking client. Cheap to clone; clones share the limiter and audit log.
#[derive(Clone)]
pub struct LlmClient {
    cfg: EndpointConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    limiter: Arc<InFlightLimiter>,
    audit: Option<Arc<AuditLog>>,
}

enum Attempt {
    Done(u16, String),
    Retry(Option<u16>, String, Option<Duration>),
    Fatal(LlmError),
}

impl LlmClient {
    /// `api_key` is normally [`EndpointConfig::api_key_from_env`].
    pub fn new(cfg: EndpointConfig, api_key: Option<String>) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build();
        let limiter = Arc::new(InFlightLimiter::new(cfg.max_in_flight));
        LlmClient {
            cfg,
            api_key,
            agent,
            limiter,
            audit: None,
        }
    }

    pub fn from_env(cfg: EndpointConfig) -> Self {
        let key = cfg.api_key_from_env();
        Self::new(cfg, key)
    }

    pub fn with_audit_log(mut self, path: &Path) -> Result<Self> {
        self.audit = Some(Arc::new(AuditLog::open(path)?));
        Ok(self)
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    pub fn limiter(&self) -> &InFlightLimiter {
        &self.limiter
    }

    fn url(&self, suffix: &str) -> String {
        format!("{}/{}", self.cfg.base_url.trim_end_matches('/'), suffix)
    }

    /// Sends a chat completion and returns the first choice's content.
    pub fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        let body = json!({
            "model": self.cfg.model,
            "messages": messages,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
        });
        let raw = self.post("chat/completions", &body)?;
        let v: Value =
            serde_json::from_str(&raw).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LlmError::MalformedResponse("missing choices[0].message.content".into()))
    }

    /// Embeds each input text; vectors are returned in input order.
    pub fn embed(&self, inputs: &[String]) -> Result<Vec<Vec<f64>>> {
        let body = json!({ "model": self.cfg.embedding_model, "input": inputs });
        let raw = self.post("embeddings", &body)?;
        #[derive(Deserialize)]
        struct Item {
            index: usize,
            embedding: Vec<f64>,
        }
        #[derive(Deserialize)]
        struct Resp {
            data: Vec<Item>,
        }
        let mut resp: Resp =
            serde_json::from_str(&raw).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
        resp.data.sort_by_key(|d| d.index);
        if resp.data.len() != inputs.len()
            || resp.data.iter().enumerate().any(|(i, d)| d.index != i)
        {
            return Err(LlmError::MalformedResponse(format!(
                "expected {} embeddings, got {}",
                inputs.len(),
                resp.data.len()
            )));
        }
        Ok(resp.data.into_iter().map(|d| d.embedding).collect())
    }

    fn post(&self, suffix: &str, body: &Value) -> Result<String> {
        let key = self.api_key.as_deref().ok_or_else(|| {
            LlmError::AuthFailure(format!(
                "environment variable {} is not set",
                self.cfg.api_key_env
            ))
        })?;
        let url = self.url(suffix);
        let _permit = self.limiter.acquire();
        let start = Instant::now();
        let attempts_max = self.cfg.max_attempts.max(1);
        let mut attempts = 0;
        let mut last_status = None;
        let outcome = loop {
            attempts += 1;
            match self.attempt(&url, key, body) {
                Attempt::Done(status, text) => break Ok((status, text)),
                Attempt::Fatal(e) => break Err(e),
                Attempt::Retry(status, msg, retry_after) => {
                    last_status = status;
                    if attempts >= attempts_max {
                        break Err(match status {
                            Some(429) => LlmError::RateLimited { attempts },
                            _ => LlmError::EndpointUnreachable(format!(
                                "{msg} after {attempts} attempts"
                            )),
                        });
                    }
                    let backoff = Duration::from_millis(
                        self.cfg
                            .backoff_ms
                            .saturating_mul(1 << (attempts - 1).min(16)),
                    );
                    let wait = retry_after
                        .map_or(backoff, |r| r.min(Duration::from_secs(60)).max(backoff));
                    log::warn!("llm: {url}: {msg}; retrying in {wait:?}");
                    std::thread::sleep(wait);
                }
            }
        };
        self.record(&url, body, attempts, start.elapsed(), &outcome, last_status)?;
        outcome.map(|(_, text)| text)
    }

    fn attempt(&self, url: &str, key: &str, body: &Value) -> Attempt {
        let req = self
            .agent
            .post(url)
            .set("Authorization", &format!("Bearer {key}"))
            .set("Content-Type", "application/json");
        match req.send_string(&body.to_string()) {
            Ok(resp) => {
                let status = resp.status();
                match resp.into_string() {
                    Ok(text) => Attempt::Done(status, text),
                    Err(e) => Attempt::Retry(Some(status), format!("reading body: {e}"), None),
                }
            }
            Err(ureq::Error::Status(code, resp)) => {
                let retry_after = resp
                    .header("Retry-After")
                    .and_then(|h| h.trim().parse::<u64>().ok())
                    .map(Duration::from_secs);
                let text = resp.into_string().unwrap_or_default();
                match code {
                    401 | 403 => {
                        Attempt::Fatal(LlmError::AuthFailure(format!("HTTP {code}: {text}")))
                    }
                    429 => Attempt::Retry(Some(code), "HTTP 429".into(), retry_after),
                    500..=599 => Attempt::Retry(Some(code), format!("HTTP {code}"), None),
                    _ => {
                        Attempt::Fatal(LlmError::MalformedResponse(format!("HTTP {code}: {text}")))
                    }
                }
            }
            Err(ureq::Error::Transport(t)) => Attempt::Retry(None, t.to_string(), None),
        }
    }

    fn record(
        &self,
        url: &str,
        body: &Value,
        attempts: u32,
        latency: Duration,
        outcome: &Result<(u16, String)>,
        last_status: Option<u16>,
    ) -> Result<()> {
        let Some(log) = &self.audit else {
            return Ok(());
        };
        let prompt = body
            .get("messages")
            .or_else(|| body.get("input"))
            .unwrap_or(body);
        let rec = AuditRecord {
            timestamp: chrono::Utc::now().to_rfc3339(),
            endpoint: url.to_string(),
            model: body
                .get("model")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string(),
            prompt_sha256: hex::encode(Sha256::digest(prompt.to_string().as_bytes())),
            request: body.clone(),
            attempts,
            latency_ms: latency.as_millis() as u64,
            status: outcome.as_ref().map(|(s, _)| *s).ok().or(last_status),
            response: outcome.as_ref().ok().map(|(_, t)| t.clone()),
            error: outcome.as_ref().err().map(|e| e.to_string()),
        };
        log.append(&rec)?;
        Ok(())
    }
}
