//! Wire-contract tests for the HTTP backends against a throwaway local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

use esgmap_core::classifier::{classify, ClassificationRequest, PromptTemplate, RemoteChatBackend};
use esgmap_core::vecindex::{embed, RemoteEmbedder};
use esgmap_core::Error;
use serde_json::{json, Value};

struct Captured {
    auth: Option<String>,
    body: Value,
}

/// Serves `replies.len()` requests, answering each with the next reply body.
fn serve(replies: Vec<(u16, String)>) -> (String, mpsc::Receiver<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, reply) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            let mut auth = None;
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
                    auth = Some(line["authorization:".len()..].trim().to_string());
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            tx.send(Captured { auth, body: serde_json::from_slice(&body).unwrap_or(Value::Null) }).unwrap();
            let mut out = stream;
            write!(
                out,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}/v1"), rx)
}

fn chat_reply(text: &str) -> (u16, String) {
    (200, json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string())
}

#[test]
fn chat_backend_sends_messages_and_parses_reply() {
    let (url, rx) = serve(vec![chat_reply("1")]);
    let mut backend = RemoteChatBackend::new(url, "ft:esg-activities");
    backend.api_key = Some("sk-test".into());
    let tmpl = PromptTemplate::default();
    let req = ClassificationRequest::new("We electrified 23 km of track.", "Electrifying railway lines.")
        .with_ids("doc:0-5", "6.14");
    let v = classify(&req, &backend, &tmpl).unwrap();
    assert_eq!((v.label, v.raw_output.as_str()), (1, "1"));

    let got = rx.recv().unwrap();
    assert_eq!(got.auth.as_deref(), Some("Bearer sk-test"));
    assert_eq!(got.body["model"], "ft:esg-activities");
    assert_eq!(got.body["temperature"], 0.0);
    let msgs = got.body["messages"].as_array().unwrap();
    assert_eq!(msgs.len(), 2);
    assert_eq!(msgs[0]["role"], "system");
    assert_eq!(msgs[1]["role"], "user");
    assert_eq!(msgs[1]["content"], tmpl.render(&req.chunk_text, &req.activity_text));
    // pair ids are local bookkeeping, never sent
    assert!(!got.body.to_string().contains("doc:0-5"));
}

#[test]
fn chat_backend_retries_unparseable_output() {
    let (url, _rx) = serve(vec![chat_reply("Maybe."), chat_reply("Certainly"), chat_reply("no")]);
    let backend = RemoteChatBackend::new(url, "m");
    let v = classify(&ClassificationRequest::new("c", "i"), &backend, &PromptTemplate::default()).unwrap();
    assert_eq!(v.label, 0);
}

#[test]
fn chat_backend_transport_failure() {
    let (url, _rx) = serve(vec![(500, "{}".into())]);
    let backend = RemoteChatBackend::new(url, "m");
    let err = classify(&ClassificationRequest::new("c", "i"), &backend, &PromptTemplate::default()).unwrap_err();
    assert!(matches!(err, Error::Transport(_)), "{err:?}");
}

#[test]
fn embedding_backend_contract() {
    let reply = json!({"model": "e5", "dimension": 3, "vectors": [[3.0, 0.0, 4.0], [0.0, 2.0, 0.0]]});
    let (url, rx) = serve(vec![(200, reply.to_string())]);
    let e = RemoteEmbedder {
        endpoint: url,
        model: "e5".into(),
        api_key: None,
        dimension: 3,
        timeout: std::time::Duration::from_secs(5),
    };
    let v = embed(&["first".to_string(), "second".to_string()], &e).unwrap();
    assert_eq!(v[0].values(), &[0.6, 0.0, 0.8]);
    assert_eq!(v[1].values(), &[0.0, 1.0, 0.0]);
    let got = rx.recv().unwrap();
    assert_eq!(got.body, json!({"model": "e5", "texts": ["first", "second"]}));
    assert!(got.auth.is_none());
}

#[test]
fn embedding_backend_failure_reports_attempts() {
    let (url, _rx) = serve(vec![(503, "{}".into()), (503, "{}".into()), (503, "{}".into())]);
    let e = RemoteEmbedder {
        endpoint: url,
        model: "e5".into(),
        api_key: None,
        dimension: 3,
        timeout: std::time::Duration::from_secs(5),
    };
    match embed(&["x".to_string()], &e) {
        Err(Error::Embedding { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("{other:?}"),
    }
}
