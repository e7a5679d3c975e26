// SPDX-License-Identifier: Apache-2.0

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use netreason_llm::{
    AuditLog, ChatMessage, EndpointConfig, LlmClient, LlmError, MockResponse, MockServer,
};

fn config(url: &str) -> EndpointConfig {
    EndpointConfig {
        base_url: url.to_string(),
        backoff_ms: 1,
        timeout_secs: 5,
        ..EndpointConfig::default()
    }
}

fn ask(client: &LlmClient) -> Result<String, LlmError> {
    client.complete(&[ChatMessage::system("sys"), ChatMessage::user("hello")])
}

#[test]
fn canned_answer_is_returned_verbatim() {
    let answer = "module m(input a, output y);\n  assign y = ~a;\nendmodule\n";
    let server = MockServer::canned(answer).unwrap();
    let client = LlmClient::new(config(server.url()), Some("k".into()));
    assert_eq!(ask(&client).unwrap(), answer);
    let reqs = server.requests();
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].authorization.as_deref(), Some("Bearer k"));
    assert_eq!(reqs[0].body["messages"][1]["content"], "hello");
    assert_eq!(reqs[0].body["temperature"], 0.0);
}

#[test]
fn retries_after_server_error() {
    let server =
        MockServer::scripted(vec![MockResponse::status(500)], MockResponse::chat("ok")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("audit.jsonl");
    let client = LlmClient::new(config(server.url()), Some("k".into()))
        .with_audit_log(&log)
        .unwrap();
    assert_eq!(ask(&client).unwrap(), "ok");
    assert_eq!(server.request_count(), 2);
    let recs = AuditLog::read_all(&log).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].attempts, 2);
    assert!(recs[0]
        .response
        .as_deref()
        .unwrap()
        .contains("\"content\":\"ok\""));
    assert_eq!(recs[0].prompt_sha256.len(), 64);
}

#[test]
fn persistent_rate_limit_is_reported() {
    let server = MockServer::scripted(vec![], MockResponse::status(429)).unwrap();
    let client = LlmClient::new(config(server.url()), Some("k".into()));
    assert!(matches!(
        ask(&client),
        Err(LlmError::RateLimited { attempts: 3 })
    ));
    assert_eq!(server.request_count(), 3);
}

#[test]
fn missing_key_fails_before_network() {
    let server = MockServer::canned("x").unwrap();
    let client = LlmClient::new(config(server.url()), None);
    assert!(matches!(ask(&client), Err(LlmError::AuthFailure(_))));
    assert_eq!(server.request_count(), 0);
}

#[test]
fn unauthorized_is_not_retried() {
    let server = MockServer::scripted(vec![], MockResponse::status(401)).unwrap();
    let client = LlmClient::new(config(server.url()), Some("bad".into()));
    assert!(matches!(ask(&client), Err(LlmError::AuthFailure(_))));
    assert_eq!(server.request_count(), 1);
}

#[test]
fn malformed_body_is_reported() {
    let server = MockServer::scripted(vec![], MockResponse::raw(200, "{\"choices\": []}")).unwrap();
    let client = LlmClient::new(config(server.url()), Some("k".into()));
    assert!(matches!(ask(&client), Err(LlmError::MalformedResponse(_))));
}

#[test]
fn unreachable_endpoint() {
    // bind then drop to get a port with no listener
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let client = LlmClient::new(
        config(&format!("http://127.0.0.1:{port}/v1")),
        Some("k".into()),
    );
    assert!(matches!(
        ask(&client),
        Err(LlmError::EndpointUnreachable(_))
    ));
}

#[test]
fn table_routes_by_prompt_substring() {
    let server = MockServer::table(vec![("hello".into(), "hi".into())], "default".into()).unwrap();
    let client = LlmClient::new(config(server.url()), Some("k".into()));
    assert_eq!(ask(&client).unwrap(), "hi");
    assert_eq!(
        client.complete(&[ChatMessage::user("other")]).unwrap(),
        "default"
    );
}

#[test]
fn embeddings_come_back_in_order() {
    let server = MockServer::canned("x").unwrap();
    let client = LlmClient::new(config(server.url()), Some("k".into()));
    let texts = vec![
        "an adder".to_string(),
        "a comparator".into(),
        "an adder".into(),
    ];
    let v = client.embed(&texts).unwrap();
    assert_eq!(v.len(), 3);
    assert_eq!(v[0], v[2]);
    assert_ne!(v[0], v[1]);
}

#[test]
fn concurrent_calls_respect_in_flight_cap() {
    let seen = Arc::new(AtomicUsize::new(0));
    let seen2 = seen.clone();
    let server = MockServer::start(move |_| {
        seen2.fetch_add(1, Ordering::SeqCst);
        std::thread::sleep(std::time::Duration::from_millis(10));
        MockResponse::chat("ok")
    })
    .unwrap();
    let cfg = EndpointConfig {
        max_in_flight: 2,
        ..config(server.url())
    };
    let client = LlmClient::new(cfg, Some("k".into()));
    std::thread::scope(|s| {
        for _ in 0..6 {
            let c = client.clone();
            s.spawn(move || assert_eq!(ask(&c).unwrap(), "ok"));
        }
    });
    assert_eq!(seen.load(Ordering::SeqCst), 6);
    assert!(client.limiter().peak() <= 2);
}
