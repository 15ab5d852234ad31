use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use conceptcarve::clustering::{Embedder, HttpEmbedder};
use conceptcarve::llm::{ChatRequest, HttpProvider, LlmError, LlmProvider};

struct Captured {
    request_line: String,
    headers: Vec<String>,
    body: String,
}

/// Serve one canned `(status, body)` per connection, recording requests.
fn serve(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Captured>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut headers = Vec::new();
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end().to_owned();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                headers.push(line);
            }
            let mut buf = vec![0u8; length];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Captured {
                request_line: request_line.trim_end().to_owned(),
                headers,
                body: String::from_utf8(buf).unwrap(),
            });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen)
}

fn chat_body(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn provider(url: &str, key: Option<&str>, retries: u32) -> HttpProvider {
    HttpProvider::new(url, "test-model", key.map(str::to_owned), Duration::from_secs(5), retries)
        .unwrap()
        .with_initial_backoff(Duration::from_millis(1))
}

#[test]
fn posts_chat_payload_with_bearer_token() {
    let (url, seen) = serve(vec![(200, chat_body("Yes"))]);
    let reply = provider(&url, Some("secret"), 3)
        .complete(&ChatRequest::new("hello"))
        .unwrap();
    assert_eq!(reply, "Yes");
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].request_line, "POST /chat/completions HTTP/1.1");
    assert!(seen[0]
        .headers
        .iter()
        .any(|h| h.eq_ignore_ascii_case("authorization: Bearer secret")));
    let body: serde_json::Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], "hello");
    assert_eq!(body["temperature"], 0.0);
}

#[test]
fn retries_server_errors_then_succeeds() {
    let (url, seen) = serve(vec![
        (500, "{}".into()),
        (429, "{}".into()),
        (200, chat_body("ok")),
    ]);
    let reply = provider(&url, None, 3).complete(&ChatRequest::new("p")).unwrap();
    assert_eq!(reply, "ok");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn gives_up_after_max_retries() {
    let (url, seen) = serve(vec![(503, "{}".into()); 3]);
    let err = provider(&url, None, 2).complete(&ChatRequest::new("p")).unwrap_err();
    assert!(matches!(err, LlmError::Http { status: 503, .. }));
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = serve(vec![(400, "{\"error\":\"bad\"}".into()), (200, chat_body("late"))]);
    let err = provider(&url, None, 3).complete(&ChatRequest::new("p")).unwrap_err();
    assert!(matches!(err, LlmError::Http { status: 400, .. }));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn unreachable_server_is_transport_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let err = provider(&url, None, 1).complete(&ChatRequest::new("p")).unwrap_err();
    assert!(matches!(err, LlmError::Transport(_) | LlmError::Timeout));
}

#[test]
fn http_embedder_round_trip() {
    let (url, seen) = serve(vec![(200, r#"{"vectors": [[3.0, 4.0], [0.0, 2.0]]}"#.into())]);
    let e = HttpEmbedder::new(format!("{url}/embed"), Duration::from_secs(5)).unwrap();
    let v = e.embed(&["a".to_string(), "b".to_string()]).unwrap();
    assert_eq!(v[0].values(), &[0.6, 0.8]);
    assert_eq!(v[1].values(), &[0.0, 1.0]);
    let body: serde_json::Value = serde_json::from_str(&seen.lock().unwrap()[0].body).unwrap();
    assert_eq!(body["texts"], serde_json::json!(["a", "b"]));
}

#[test]
fn http_embedder_rejects_wrong_count() {
    let (url, _) = serve(vec![(200, r#"{"vectors": [[1.0]]}"#.into())]);
    let e = HttpEmbedder::new(url, Duration::from_secs(5)).unwrap();
    assert!(e.embed(&["a".to_string(), "b".to_string()]).is_err());
}
