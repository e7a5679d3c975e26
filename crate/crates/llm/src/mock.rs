// SPDX-License-Identifier: Apache-2.0

//! Deterministic local server speaking the same wire format as the client.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// Dimension of the built-in embedding responder.
pub const MOCK_EMBED_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct MockRequest {
    pub path: String,
    pub authorization: Option<String>,
    pub body: Value,
}

impl MockRequest {
    /// Concatenated message contents of a chat request.
    pub fn prompt_text(&self) -> String {
        self.body
            .get("messages")
            .and_then(Value::as_array)
            .map(|ms| {
                ms.iter()
                    .filter_map(|m| m.get("content").and_then(Value::as_str))
                    .collect::<Vec<_>>()
                    .join("\n")
            })
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockResponse {
    pub status: u16,
    pub body: String,
}

impl MockResponse {
    pub fn chat(content: &str) -> Self {
        let body = json!({
            "id": "mock",
            "object": "chat.completion",
            "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
        });
        MockResponse {
            status: 200,
            body: body.to_string(),
        }
    }

    pub fn status(code: u16) -> Self {
        MockResponse {
            status: code,
            body: json!({"error": {"message": format!("mock status {code}")}}).to_string(),
        }
    }

    pub fn raw(status: u16, body: &str) -> Self {
        MockResponse {
            status,
            body: body.to_string(),
        }
    }

    pub fn embeddings(vectors: &[Vec<f64>]) -> Self {
        let data: Vec<Value> = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| json!({"object": "embedding", "index": i, "embedding": v}))
            .collect();
        MockResponse {
            status: 200,
            body: json!({"object": "list", "data": data}).to_string(),
        }
    }
}

/// Hashed bag-of-words vector: each lowercase alphanumeric word adds 1 to a
/// bucket chosen by its SHA-256.
pub fn hashed_embedding(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; MOCK_EMBED_DIM];
    for w in text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
    {
        let h = Sha256::digest(w.as_bytes());
        v[(h[0] as usize) % MOCK_EMBED_DIM] += 1.0;
    }
    v
}

type Responder = dyn Fn(&MockRequest) -> MockResponse + Send + Sync;

/// Runs on `127.0.0.1` with an ephemeral port until dropped.
pub struct MockServer {
    url: String,
    requests: Arc<Mutex<Vec<MockRequest>>>,
    stop: Arc<AtomicBool>,
    server: Arc<tiny_http::Server>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Serves responses from `responder`. `/embeddings` requests whose
    /// responder returns status 404 fall back to [`hashed_embedding`].
    pub fn start<F>(responder: F) -> std::io::Result<Self>
    where
        F: Fn(&MockRequest) -> MockResponse + Send + Sync + 'static,
    {
        let server = tiny_http::Server::http("127.0.0.1:0").map_err(std::io::Error::other)?;
        let server = Arc::new(server);
        let port = server
            .server_addr()
            .to_ip()
            .map(|a| a.port())
            .ok_or_else(|| std::io::Error::other("mock server has no IP address"))?;
        let requests = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let responder: Arc<Responder> = Arc::new(responder);
        let handle = {
            let (server, requests, stop) = (server.clone(), requests.clone(), stop.clone());
            std::thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    let Ok(Some(mut req)) = server.recv_timeout(Duration::from_millis(50)) else {
                        continue;
                    };
                    let mut text = String::new();
                    let _ = req.as_reader().read_to_string(&mut text);
                    let authorization = req
                        .headers()
                        .iter()
                        .find(|h| h.field.equiv("Authorization"))
                        .map(|h| h.value.to_string());
                    let mreq = MockRequest {
                        path: req.url().to_string(),
                        authorization,
                        body: serde_json::from_str(&text).unwrap_or(Value::Null),
                    };
                    requests.lock().unwrap().push(mreq.clone());
                    let mut resp = responder(&mreq);
                    if resp.status == 404 && mreq.path.ends_with("/embeddings") {
                        resp = default_embeddings(&mreq);
                    }
                    let header =
                        tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
                    let _ = req.respond(
                        tiny_http::Response::from_string(resp.body)
                            .with_status_code(resp.status)
                            .with_header(header),
                    );
                }
            })
        };
        Ok(MockServer {
            url: format!("http://127.0.0.1:{port}/v1"),
            requests,
            stop,
            server,
            handle: Some(handle),
        })
    }

    /// Every chat request gets `content`.
    pub fn canned(content: &str) -> std::io::Result<Self> {
        let content = content.to_string();
        Self::start(move |r| route_chat(r, || MockResponse::chat(&content)))
    }

    /// Replies from `script` in order, then `then` for every later request.
    pub fn scripted(script: Vec<MockResponse>, then: MockResponse) -> std::io::Result<Self> {
        let queue = Mutex::new(VecDeque::from(script));
        Self::start(move |r| {
            route_chat(r, || {
                queue
                    .lock()
                    .unwrap()
                    .pop_front()
                    .unwrap_or_else(|| then.clone())
            })
        })
    }

    /// First entry whose key occurs in the prompt wins; otherwise `default`.
    pub fn table(entries: Vec<(String, String)>, default: String) -> std::io::Result<Self> {
        Self::start(move |r| {
            route_chat(r, || {
                let prompt = r.prompt_text();
                let hit = entries.iter().find(|(k, _)| prompt.contains(k.as_str()));
                MockResponse::chat(hit.map_or(default.as_str(), |(_, v)| v.as_str()))
            })
        })
    }

    /// Base URL suitable for [`crate::EndpointConfig::base_url`].
    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn requests(&self) -> Vec<MockRequest> {
        self.requests.lock().unwrap().clone()
    }

    pub fn request_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

fn route_chat(r: &MockRequest, chat: impl FnOnce() -> MockResponse) -> MockResponse {
    if r.path.ends_with("/chat/completions") {
        chat()
    } else {
        MockResponse::status(404)
    }
}

fn default_embeddings(r: &MockRequest) -> MockResponse {
    let inputs: Vec<String> = match r.body.get("input") {
        Some(Value::Array(xs)) => xs
            .iter()
            .filter_map(|x| x.as_str().map(str::to_string))
            .collect(),
        Some(Value::String(s)) => vec![s.clone()],
        _ => return MockResponse::status(400),
    };
    MockResponse::embeddings(
        &inputs
            .iter()
            .map(|t| hashed_embedding(t))
            .collect::<Vec<_>>(),
    )
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
