use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use mcie::image::Image;
use mcie::instructions::{decompose_mllm, parse_decomposition, InstructionError, OpType};
use mcie::mllm::{ApiKey, Fixtures, MllmClient, MllmError, Transport};
use serde_json::{json, Value};

const RAW: &str = "add a red square at the top left; remove the blue circle; make the green triangle yellow";

fn fixture_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/mllm"))
}

fn fixture_image() -> Image {
    Image::filled(4, 4, [0.5, 0.5, 0.5])
}

fn recorded_reply() -> String {
    let text = std::fs::read_to_string(fixture_dir().join("decompose_three.json")).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    v["response"].as_str().unwrap().to_string()
}

#[test]
fn replay_decomposes_three_clauses() {
    let client = MllmClient::replay(Fixtures::load(fixture_dir()).unwrap());
    let ci = decompose_mllm(RAW, &fixture_image(), &client).unwrap();
    let ops: Vec<OpType> = ci.subs().iter().map(|s| s.op).collect();
    assert_eq!(ops, [OpType::Add, OpType::Remove, OpType::Change]);
    assert_eq!(ci.subs()[2].bbox.coords(), [0.6, 0.1, 0.95, 0.45]);
    // a different request is a miss, never a fallback
    let other = decompose_mllm("remove the cat", &fixture_image(), &client);
    match other {
        Err(InstructionError::Mllm(MllmError::FixtureMiss { hash })) => assert_eq!(hash.len(), 64),
        r => panic!("expected a fixture miss, got {r:?}"),
    }
}

/// Serves one HTTP exchange per entry of `responses`, forwarding each
/// request body and headers over the returned channel.
fn stub_server(responses: Vec<(u16, String, Duration)>) -> (String, mpsc::Receiver<(String, String)>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body, delay) in responses {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = String::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                headers.push_str(&line);
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            let _ = tx.send((headers, String::from_utf8(buf).unwrap()));
            thread::sleep(delay);
            let mut stream = stream;
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    (format!("http://127.0.0.1:{}/v1/chat/completions", addr.port()), rx)
}

fn completion(content: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

#[test]
fn live_stub_matches_replay() {
    let (url, rx) = stub_server(vec![(200, completion(&recorded_reply()), Duration::ZERO)]);
    let client = MllmClient::new(url, "gpt-4o", Transport::Live).with_api_key(ApiKey::new("sk-test-secret"));
    let live = decompose_mllm(RAW, &fixture_image(), &client).unwrap();
    let (headers, body) = rx.recv().unwrap();
    assert!(headers.to_ascii_lowercase().contains("authorization: bearer sk-test-secret"));
    let replay = MllmClient::replay(Fixtures::load(fixture_dir()).unwrap());
    let expected = decompose_mllm(RAW, &fixture_image(), &replay).unwrap();
    assert_eq!(live, expected);
    // the wire body is the canonical request the fixture was keyed on
    let sent: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(sent, client.build_request(&mcie::mllm::DECOMPOSE, &format!("Request: {RAW}"), &[&fixture_image()]));
}

#[test]
fn live_error_kinds() {
    let (url, _rx) = stub_server(vec![
        (503, "{\"error\": \"busy sk-test-secret\"}".into(), Duration::ZERO),
        (200, "not json".into(), Duration::ZERO),
        (200, json!({"choices": []}).to_string(), Duration::ZERO),
        (200, completion("{}"), Duration::from_millis(1500)),
    ]);
    let client = MllmClient::new(url, "gpt-4o", Transport::Live)
        .with_api_key(ApiKey::new("sk-test-secret"))
        .with_timeout(Duration::from_millis(400));
    let req = json!({"x": 1});
    match client.send(&req) {
        Err(MllmError::Status { status: 503, body }) => assert!(!body.contains("sk-test-secret")),
        r => panic!("{r:?}"),
    }
    assert!(matches!(client.send(&req), Err(MllmError::Schema { .. })));
    assert!(matches!(client.send(&req), Err(MllmError::Schema { .. })));
    assert!(matches!(client.send(&req), Err(MllmError::Timeout(_))));
}

#[test]
fn malformed_model_reply_is_reported_with_raw_text() {
    let client =
        MllmClient::mock(vec!["{\"subs\": [{\"text\": \"x\", \"op\": \"MOVE\", \"bbox\": [0,0,1,1]}]}".into()]);
    match decompose_mllm("move it", &fixture_image(), &client) {
        Err(InstructionError::Response { reason, raw }) => {
            assert!(reason.contains("MOVE"), "{reason}");
            assert!(raw.contains("MOVE"));
        }
        r => panic!("{r:?}"),
    }
    assert!(parse_decomposition("x", &json!({"subs": []})).is_err());
}
