//! HttpBackend against a minimal in-process HTTP stub.

use coreflow::backend::{BackendError, ChatBackend, ChatRequest, HttpBackend, RetryPolicy};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc::{channel, Receiver};
use std::thread;

/// Serves one canned (status, body) response per incoming connection and
/// forwards each raw request to the receiver.
fn serve(responses: Vec<(u16, String)>) -> (String, Receiver<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = channel();
    thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut request = String::new();
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    content_length = v.trim().parse().unwrap();
                }
                let done = line == "\r\n";
                request.push_str(&line);
                if done {
                    break;
                }
            }
            let mut payload = vec![0u8; content_length];
            reader.read_exact(&mut payload).unwrap();
            request.push_str(&String::from_utf8_lossy(&payload));
            tx.send(request).unwrap();

            let response = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            reader.into_inner().write_all(response.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}"), rx)
}

fn ok_body(content: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": content}}],
        "usage": {"prompt_tokens": 10, "completion_tokens": 3}
    })
    .to_string()
}

fn request() -> ChatRequest {
    ChatRequest::user(Some("be brief"), "hello", 0.0)
}

#[test]
fn parses_success_response_and_sends_wire_shape() {
    let (endpoint, rx) = serve(vec![(200, ok_body("hi there"))]);
    let backend = HttpBackend::new(&endpoint, "test-model").with_retry(RetryPolicy::immediate(3));
    let resp = backend.complete(&request()).unwrap();
    assert_eq!(resp.content, "hi there");
    let usage = resp.usage.unwrap();
    assert_eq!(usage.prompt_tokens, 10);
    assert_eq!(usage.completion_tokens, 3);

    let raw = rx.recv().unwrap();
    assert!(raw.starts_with("POST /chat/completions HTTP/1.1"));
    assert!(raw.contains("\"model\":\"test-model\""));
    assert!(raw.contains("hello"));
    assert!(raw.contains("be brief"));
}

#[test]
fn retries_on_500_then_succeeds() {
    let (endpoint, rx) = serve(vec![(500, "boom".into()), (200, ok_body("recovered"))]);
    let backend = HttpBackend::new(&endpoint, "m").with_retry(RetryPolicy::immediate(3));
    let resp = backend.complete(&request()).unwrap();
    assert_eq!(resp.content, "recovered");
    assert_eq!(rx.iter().count(), 2);
}

#[test]
fn retries_on_429_then_succeeds() {
    let (endpoint, _rx) = serve(vec![(429, "slow down".into()), (200, ok_body("ok"))]);
    let backend = HttpBackend::new(&endpoint, "m").with_retry(RetryPolicy::immediate(3));
    assert_eq!(backend.complete(&request()).unwrap().content, "ok");
}

#[test]
fn gives_up_after_configured_attempts() {
    let (endpoint, rx) = serve(vec![(500, "a".into()), (500, "b".into()), (500, "c".into())]);
    let backend = HttpBackend::new(&endpoint, "m").with_retry(RetryPolicy::immediate(3));
    match backend.complete(&request()) {
        Err(BackendError::Status(500)) => {}
        other => panic!("expected Status(500), got {other:?}"),
    }
    assert_eq!(rx.iter().count(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (endpoint, rx) = serve(vec![(404, "missing".into())]);
    let backend = HttpBackend::new(&endpoint, "m").with_retry(RetryPolicy::immediate(3));
    match backend.complete(&request()) {
        Err(BackendError::Status(404)) => {}
        other => panic!("expected Status(404), got {other:?}"),
    }
    assert_eq!(rx.iter().count(), 1);
}

#[test]
fn malformed_body_is_an_error() {
    let (endpoint, _rx) = serve(vec![(200, "{}".into())]);
    let backend = HttpBackend::new(&endpoint, "m").with_retry(RetryPolicy::immediate(1));
    match backend.complete(&request()) {
        Err(BackendError::MalformedResponse(_)) => {}
        other => panic!("expected MalformedResponse, got {other:?}"),
    }
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    // Bind then drop, so the port is very likely closed.
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let backend =
        HttpBackend::new(format!("http://127.0.0.1:{port}"), "m").with_retry(RetryPolicy::immediate(2));
    match backend.complete(&request()) {
        Err(BackendError::Transport(_)) => {}
        other => panic!("expected Transport error, got {other:?}"),
    }
}
