//! Remote backends against a throwaway local HTTP server. Kept in its own
//! test binary so no `--mock` run can arm the network guard here.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use inca::cache::{CachedEmbedder, EmbeddingCache};
use inca::remote::{EndpointConfig, RemoteChatClient, RemoteEmbedder, RetryPolicy};
use inca_core::{ChatClient, CompletionParams, Embedder};
use serde_json::{json, Value};

#[derive(Debug, Clone)]
struct Request {
    headers: Vec<(String, String)>,
    body: Value,
}

impl Request {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

type Handler = dyn Fn(usize, &Request) -> (u16, Value) + Send + Sync;

struct Server {
    url: String,
    hits: Arc<AtomicUsize>,
    requests: Arc<Mutex<Vec<Request>>>,
}

impl Server {
    fn start(handler: impl Fn(usize, &Request) -> (u16, Value) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/endpoint", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let requests = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let (h, r) = (hits.clone(), requests.clone());
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let (h, r, handler) = (h.clone(), r.clone(), handler.clone());
                std::thread::spawn(move || serve(stream, &h, &r, &*handler));
            }
        });
        Self {
            url,
            hits,
            requests,
        }
    }

    fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

fn serve(
    stream: std::net::TcpStream,
    hits: &AtomicUsize,
    log: &Mutex<Vec<Request>>,
    handler: &Handler,
) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut headers = Vec::new();
    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    loop {
        line.clear();
        reader.read_line(&mut line).unwrap();
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        let (k, v) = l.split_once(':').unwrap();
        headers.push((k.trim().to_string(), v.trim().to_string()));
    }
    let len: usize = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .map(|(_, v)| v.parse().unwrap())
        .unwrap_or(0);
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).unwrap();
    let request = Request {
        headers,
        body: serde_json::from_slice(&body).unwrap_or(Value::Null),
    };
    let n = hits.fetch_add(1, Ordering::SeqCst);
    log.lock().unwrap().push(request.clone());
    let (status, reply) = handler(n, &request);
    let payload = reply.to_string();
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    );
}

fn config(url: &str) -> EndpointConfig {
    let mut c = EndpointConfig::new(url, "test-model");
    c.retry = RetryPolicy {
        attempts: 3,
        initial_backoff: Duration::from_millis(1),
    };
    c.timeout = Duration::from_secs(10);
    c
}

fn chat_reply(text: &str) -> Value {
    json!({"choices": [{"message": {"role": "assistant", "content": text}}]})
}

#[test]
fn chat_request_follows_the_completions_schema() {
    let server = Server::start(|_, _| (200, chat_reply(" direct_deposit")));
    let mut cfg = config(&server.url);
    cfg.api_key = Some("secret".into());
    let client = RemoteChatClient::new(cfg, Some(4096));
    let params = CompletionParams::PREDICTION;
    let out = inca_core::llm::complete(&client, "Query: x\nClass:", &params).unwrap();
    assert_eq!(out, " direct_deposit");
    assert_eq!(client.context_window(), Some(4096));

    let req = server.requests.lock().unwrap()[0].clone();
    assert_eq!(req.body["model"], "test-model");
    assert_eq!(req.body["messages"][0]["role"], "user");
    assert_eq!(req.body["messages"][0]["content"], "Query: x\nClass:");
    assert_eq!(req.body["temperature"], 0.0);
    assert_eq!(req.body["max_tokens"], params.max_tokens);
    assert_eq!(req.header("authorization"), Some("Bearer secret"));
}

#[test]
fn embedder_probes_dimension_and_restores_input_order() {
    let server = Server::start(|_, req| {
        let inputs = req.body["input"].as_array().unwrap().clone();
        let mut data: Vec<Value> = inputs
            .iter()
            .enumerate()
            .map(|(i, _)| json!({"index": i, "embedding": [i as f64, 1.0, -1.0]}))
            .collect();
        data.reverse();
        (200, json!({"data": data}))
    });
    let embedder = RemoteEmbedder::new(config(&server.url), None).unwrap();
    assert_eq!(embedder.dimension(), 3);
    assert_eq!(server.hits(), 1);
    let v = embedder.embed_batch(&["a", "b", "c"]).unwrap();
    assert_eq!(v[0][0], 0.0);
    assert_eq!(v[2][0], 2.0);
    assert_eq!(
        server.requests.lock().unwrap()[1].body["input"],
        json!(["a", "b", "c"])
    );
}

#[test]
fn server_errors_are_retried() {
    let server = Server::start(|n, _| {
        if n < 2 {
            (500, json!({"error": "busy"}))
        } else {
            (200, chat_reply("ok"))
        }
    });
    let client = RemoteChatClient::new(config(&server.url), None);
    assert_eq!(client.complete("p", &CompletionParams::TAGS).unwrap(), "ok");
    assert_eq!(server.hits(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = Server::start(|_, _| (400, json!({"error": "bad request"})));
    let client = RemoteChatClient::new(config(&server.url), None);
    let err = client.complete("p", &CompletionParams::TAGS).unwrap_err();
    assert_eq!(err.name(), "BackendUnavailable");
    assert_eq!(server.hits(), 1);
}

#[test]
fn persistent_failure_surfaces_after_all_attempts() {
    let server = Server::start(|_, _| (503, json!({})));
    let client = RemoteChatClient::new(config(&server.url), None);
    let err = client.complete("p", &CompletionParams::TAGS).unwrap_err();
    assert!(matches!(err, inca_core::Error::BackendUnavailable(_)));
    assert_eq!(server.hits(), 3);
}

#[test]
fn concurrent_requests_respect_max_in_flight() {
    let active = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let (a, p) = (active.clone(), peak.clone());
    let server = Server::start(move |_, _| {
        let now = a.fetch_add(1, Ordering::SeqCst) + 1;
        p.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(40));
        a.fetch_sub(1, Ordering::SeqCst);
        (200, chat_reply("ok"))
    });
    let mut cfg = config(&server.url);
    cfg.max_in_flight = 2;
    let client = Arc::new(RemoteChatClient::new(cfg, None));
    let threads: Vec<_> = (0..8)
        .map(|_| {
            let c = client.clone();
            std::thread::spawn(move || c.complete("p", &CompletionParams::TAGS).unwrap())
        })
        .collect();
    for t in threads {
        t.join().unwrap();
    }
    assert_eq!(server.hits(), 8);
    assert!(
        peak.load(Ordering::SeqCst) <= 2,
        "peak {}",
        peak.load(Ordering::SeqCst)
    );
}

#[test]
fn cached_remote_embedder_skips_repeat_requests() {
    let server = Server::start(|_, req| {
        let n = req.body["input"].as_array().unwrap().len();
        let data: Vec<Value> = (0..n)
            .map(|i| json!({"index": i, "embedding": [0.5, i as f64]}))
            .collect();
        (200, json!({"data": data}))
    });
    let remote = RemoteEmbedder::new(config(&server.url), Some(2)).unwrap();
    assert_eq!(server.hits(), 0);
    let cached = CachedEmbedder::new(remote, Arc::new(EmbeddingCache::in_memory()));
    let first = cached.embed_batch(&["x", "y"]).unwrap();
    let second = cached.embed_batch(&["x", "y"]).unwrap();
    assert_eq!(first, second);
    assert_eq!(server.hits(), 1);
}

#[test]
fn missing_endpoint_variable_is_reported() {
    let err = EndpointConfig::from_env("INCA_TEST_SURELY_UNSET_VARIABLE", "m").unwrap_err();
    assert!(err.contains("INCA_TEST_SURELY_UNSET_VARIABLE"));
}
