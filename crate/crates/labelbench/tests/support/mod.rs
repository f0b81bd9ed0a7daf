//! Test support: a minimal scripted HTTP/1.1 server for exercising the
//! chat and embeddings clients without a network.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

/// One request as the fake server saw it.
#[derive(Debug, Clone)]
pub struct Received {
    pub path: String,
    pub body: String,
    pub authorization: Option<String>,
}

/// What the handler tells the server to send back.
pub struct FakeResponse {
    pub status: u16,
    pub body: String,
    /// Sleep before responding; longer than the client timeout simulates
    /// a hung backend.
    pub delay: Duration,
}

impl FakeResponse {
    pub fn json(status: u16, body: impl Into<String>) -> Self {
        Self {
            status,
            body: body.into(),
            delay: Duration::ZERO,
        }
    }

    pub fn delayed(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

pub type Handler = Arc<dyn Fn(usize, &Received) -> FakeResponse + Send + Sync>;

/// A capturing fake HTTP server driven by a handler closure. The accept
/// loop runs on a detached thread for the life of the test process.
pub struct FakeServer {
    base_url: String,
    requests: Arc<Mutex<Vec<Received>>>,
    counter: Arc<AtomicUsize>,
}

impl FakeServer {
    pub fn start(handler: Handler) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind fake server");
        let addr = listener.local_addr().unwrap();
        let requests: Arc<Mutex<Vec<Received>>> = Arc::new(Mutex::new(Vec::new()));
        let counter = Arc::new(AtomicUsize::new(0));
        {
            let requests = Arc::clone(&requests);
            let counter = Arc::clone(&counter);
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    let Ok(stream) = stream else { continue };
                    let requests = Arc::clone(&requests);
                    let counter = Arc::clone(&counter);
                    let handler = Arc::clone(&handler);
                    std::thread::spawn(move || {
                        let _ = serve_one(stream, &handler, &requests, &counter);
                    });
                }
            });
        }
        Self {
            base_url: format!("http://{addr}"),
            requests,
            counter,
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base_url)
    }

    pub fn request_count(&self) -> usize {
        self.counter.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<Received> {
        self.requests.lock().unwrap().clone()
    }
}

fn serve_one(
    mut stream: TcpStream,
    handler: &Handler,
    requests: &Mutex<Vec<Received>>,
    counter: &AtomicUsize,
) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    let mut reader = BufReader::new(stream.try_clone()?);

    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let path = request_line
        .split_whitespace()
        .nth(1)
        .unwrap_or("/")
        .to_string();

    let mut content_length = 0usize;
    let mut authorization = None;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            let value = value.trim();
            match name.to_ascii_lowercase().as_str() {
                "content-length" => content_length = value.parse().unwrap_or(0),
                "authorization" => authorization = Some(value.to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    let received = Received {
        path,
        body: String::from_utf8_lossy(&body).into_owned(),
        authorization,
    };

    let index = counter.fetch_add(1, Ordering::SeqCst);
    requests.lock().unwrap().push(received.clone());
    let response = handler(index, &received);
    if !response.delay.is_zero() {
        std::thread::sleep(response.delay);
    }

    let reason = match response.status {
        200 => "OK",
        401 => "Unauthorized",
        403 => "Forbidden",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Response",
    };
    let payload = response.body.as_bytes();
    let head = format!(
        "HTTP/1.1 {} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
        response.status,
        payload.len()
    );
    stream.write_all(head.as_bytes())?;
    stream.write_all(payload)?;
    stream.flush()?;
    Ok(())
}

/// A chat-completion response body with usage counters.
pub fn chat_body(text: &str, prompt_tokens: u64, completion_tokens: u64) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": prompt_tokens, "completion_tokens": completion_tokens},
    })
    .to_string()
}

/// Extract the single user message from a chat request body.
pub fn prompt_of(request: &Received) -> String {
    let v: serde_json::Value = serde_json::from_str(&request.body).unwrap_or_default();
    v["messages"][0]["content"]
        .as_str()
        .unwrap_or("")
        .to_string()
}

/// A chat handler that answers every prompt with a label derived from the
/// first keyword in the prompt, echoing plausible usage numbers.
pub fn keyword_echo_handler() -> Handler {
    Arc::new(|_, request| {
        let prompt = prompt_of(request);
        let keyword = prompt
            .split("keywords: ")
            .nth(1)
            .and_then(|rest| rest.split([',', '\n']).next())
            .unwrap_or("something")
            .trim()
            .to_string();
        let tokens = (prompt.chars().count() as u64).div_ceil(4);
        FakeResponse::json(200, chat_body(&format!("topic: {keyword}"), tokens, 4))
    })
}

/// An embeddings handler returning a deterministic 8-dim vector per input
/// text (independent of the crate's own embedder).
pub fn embeddings_handler() -> Handler {
    Arc::new(|_, request| {
        let v: serde_json::Value = serde_json::from_str(&request.body).unwrap_or_default();
        let text = v["input"][0].as_str().unwrap_or("");
        let mut acc: u64 = 1469598103934665603;
        let mut vector = [0.0f64; 8];
        for (i, byte) in text.bytes().enumerate() {
            acc = acc.wrapping_mul(1099511628211) ^ u64::from(byte);
            vector[(i + byte as usize) % 8] += f64::from(byte % 17) + 1.0;
        }
        vector[(acc % 8) as usize] += 1.0;
        let body = serde_json::json!({
            "data": [{"embedding": vector.to_vec()}],
            "model": v["model"],
        })
        .to_string();
        FakeResponse::json(200, body)
    })
}
