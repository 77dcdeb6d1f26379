//! HttpLlm against a scripted local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use hhpool_core::llm::{ChatMessage, HttpLlm, LlmClient, LlmConfig, LlmError};

struct Seen {
    auth: String,
    body: serde_json::Value,
}

/// Serves one scripted (status, body) per connection, then stops.
fn serve(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in script {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut len = 0;
            let mut auth = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = line["authorization:".len()..].trim().to_string();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen { auth, body: serde_json::from_slice(&buf).unwrap() });
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}/v1"), seen)
}

fn ok_body(text: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": 12, "completion_tokens": 3}
    })
    .to_string()
}

fn config(base_url: String, retries: u32) -> LlmConfig {
    LlmConfig { base_url, model_name: "test-model".into(), max_transport_retries: retries, timeout_secs: 5.0, ..Default::default() }
}

fn prompt() -> Vec<ChatMessage> {
    vec![ChatMessage::system("sys"), ChatMessage::user("hello")]
}

#[test]
fn retries_server_errors_then_succeeds() {
    let (url, seen) = serve(vec![(500, "{}".into()), (429, "{}".into()), (200, ok_body("2"))]);
    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("t.jsonl");
    let client = HttpLlm::with_api_key(config(url, 3), "sk-secret-123")
        .unwrap()
        .with_backoff(Duration::from_millis(1))
        .with_transcript(&transcript)
        .unwrap();
    let reply = client.complete(&prompt()).unwrap();
    assert_eq!(reply.text, "2");
    assert_eq!((reply.prompt_tokens, reply.completion_tokens), (12, 3));

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert_eq!(seen[0].auth, "Bearer sk-secret-123");
    assert_eq!(seen[2].body["model"], "test-model");
    assert_eq!(seen[2].body["messages"][1]["role"], "user");
    assert_eq!(seen[2].body["messages"][1]["content"], "hello");

    let log = std::fs::read_to_string(&transcript).unwrap();
    assert_eq!(log.lines().count(), 1);
    assert!(!log.contains("sk-secret-123"));
}

#[test]
fn gives_up_after_retry_limit() {
    let (url, seen) = serve(vec![(503, "{}".into()), (503, "{}".into())]);
    let client = HttpLlm::with_api_key(config(url, 1), "k").unwrap().with_backoff(Duration::from_millis(1));
    match client.complete(&prompt()) {
        Err(LlmError::Transport { attempts, .. }) => assert_eq!(attempts, 2),
        other => panic!("expected transport error, got {other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 2);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = serve(vec![(400, r#"{"error":"bad model"}"#.into())]);
    let client = HttpLlm::with_api_key(config(url, 3), "k").unwrap().with_backoff(Duration::from_millis(1));
    assert!(matches!(client.complete(&prompt()), Err(LlmError::Protocol(_))));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn malformed_body_is_protocol_error() {
    let (url, _) = serve(vec![(200, r#"{"choices": []}"#.into())]);
    let client = HttpLlm::with_api_key(config(url, 0), "k").unwrap();
    assert!(matches!(client.complete(&prompt()), Err(LlmError::Protocol(_))));
}

#[test]
fn unreachable_endpoint_is_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let client = HttpLlm::with_api_key(config(format!("http://127.0.0.1:{port}"), 1), "k")
        .unwrap()
        .with_backoff(Duration::from_millis(1));
    assert!(matches!(client.complete(&prompt()), Err(LlmError::Transport { attempts: 2, .. })));
}
