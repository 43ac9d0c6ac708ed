use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::Value;
use tarjama_core::ranking::RewardScorer;
use tarjama_core::{Candidate, Conversation, PartKind, Role, Tokenizer, TranslationUnit};
use tarjama_queue::{Backend, BackendConfig, BackendError, Backoff, HttpScorer, Translator};

/// Minimal HTTP/1.1 server answering each request with the next scripted
/// (status, body) pair and recording request bodies.
struct Stub {
    url: String,
    hits: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<Value>>>,
}

fn serve(script: Vec<(u16, String)>) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let (h, b) = (hits.clone(), bodies.clone());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        length = v.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            b.lock().unwrap().push(serde_json::from_slice(&body).unwrap_or(Value::Null));
            let i = h.fetch_add(1, Ordering::SeqCst);
            let (status, reply) = script.get(i).cloned().unwrap_or((500, String::new()));
            let response = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            );
            stream.write_all(response.as_bytes()).unwrap();
        }
    });
    Stub { url, hits, bodies }
}

fn chat_reply(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn unit(text: &str) -> TranslationUnit {
    TranslationUnit {
        conversation_id: "c".into(),
        split: "train".into(),
        category: None,
        message_index: 0,
        message_count: 1,
        role: Role::User,
        part_type: PartKind::Visible,
        part_index: 0,
        part_count: 1,
        chunk_index: 0,
        chunk_count: 1,
        source_text: text.into(),
    }
}

fn fast_http(url: &str) -> BackendConfig {
    BackendConfig {
        model: Some("seed-x".into()),
        initial_backoff_ms: 5,
        max_backoff_ms: 20,
        timeout_secs: 5,
        ..BackendConfig::http("mt", url)
    }
}

#[test]
fn retries_server_errors_then_succeeds() {
    let fail = (500, "{}".to_string());
    let stub = serve(vec![fail.clone(), fail.clone(), fail, (200, chat_reply("مرحبا"))]);
    let backend = Backend::new(fast_http(&stub.url), Tokenizer::builtin()).unwrap();
    assert_eq!(backend.translate(&unit("hello")).unwrap(), "مرحبا");
    assert_eq!(stub.hits.load(Ordering::SeqCst), 4);
    let bodies = stub.bodies.lock().unwrap();
    let body = &bodies[3];
    assert_eq!(body["model"], "seed-x");
    assert_eq!(body["temperature"], 0.2);
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], "Translate to Arabic:\nhello");
}

#[test]
fn gives_up_after_retry_budget() {
    let stub = serve(vec![(503, String::new()); 10]);
    let config = BackendConfig { max_retries: 2, ..fast_http(&stub.url) };
    let backend = Backend::new(config, Tokenizer::builtin()).unwrap();
    let err = backend.translate(&unit("hello")).unwrap_err();
    assert!(matches!(err, BackendError::Http { attempts: 3, .. }), "{err}");
    assert_eq!(stub.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let stub = serve(vec![(400, "{\"error\":\"bad\"}".into()), (200, chat_reply("x"))]);
    let backend = Backend::new(fast_http(&stub.url), Tokenizer::builtin()).unwrap();
    assert!(matches!(backend.translate(&unit("hello")), Err(BackendError::Http { attempts: 1, .. })));
    thread::sleep(Duration::from_millis(20));
    assert_eq!(stub.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn missing_api_key_is_reported() {
    let config = BackendConfig {
        api_key_env: Some("TARJAMA_TEST_KEY_THAT_IS_NOT_SET".into()),
        ..fast_http("http://127.0.0.1:9")
    };
    assert!(matches!(Backend::new(config, Tokenizer::builtin()), Err(BackendError::MissingApiKey(_))));
}

#[test]
fn http_scorer_posts_request_and_validates_score() {
    let stub = serve(vec![(500, String::new()), (200, "{\"score\":0.75}".into()), (200, "{\"score\":3}".into())]);
    let backoff = Backoff { max_retries: 2, initial_ms: 1, max_ms: 1 };
    let scorer = HttpScorer::new(&stub.url, None, Duration::from_secs(5), backoff).unwrap();
    let source = Conversation::new("c1", "train", vec![(Role::User, "hi".into())]);
    let candidate = Candidate {
        conversation_id: "c1".into(),
        translator_id: "mt".into(),
        conversation: Conversation::new("c1", "train", vec![(Role::User, "مرحبا".into())]),
    };
    assert_eq!(scorer.score(&source, &candidate).unwrap(), 0.75);
    assert!(scorer.score(&source, &candidate).is_err());
    let bodies = stub.bodies.lock().unwrap();
    assert_eq!(bodies[1]["translator_id"], "mt");
    assert_eq!(bodies[1]["candidate"]["messages"][0]["content"], "مرحبا");
}
