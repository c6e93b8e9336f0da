//! Shared test support: an in-process kernel with small English resources
//! and a minimal HTTP stub that plays the role of a remote atomic service.

#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use cws_core::coordinator::CoordinatorConfig;
use cws_core::envelope::{decode_envelope, encode_envelope, DocumentEnvelope, PosTag};
use cws_core::kernel::{Kernel, Resources};
use cws_core::nlp::{train_profile, Lexicon, StopList, TermLexicon};
use cws_core::vectors::VectorModel;

pub fn test_resources() -> Resources {
    let mut lexicon = Lexicon::new();
    for (surface, lemma, pos) in [
        ("cats", "cat", PosTag::NOUN),
        ("cat", "cat", PosTag::NOUN),
        ("dogs", "dog", PosTag::NOUN),
        ("dog", "dog", PosTag::NOUN),
        ("purrs", "purr", PosTag::VERB),
        ("purr", "purr", PosTag::VERB),
        ("sleeps", "sleep", PosTag::VERB),
        ("sleep", "sleep", PosTag::VERB),
        ("barks", "bark", PosTag::VERB),
        ("machines", "machine", PosTag::NOUN),
        ("learning", "learning", PosTag::NOUN),
    ] {
        lexicon.insert(surface, lemma, pos);
    }
    let mut terms = TermLexicon::new();
    terms.insert(&["machine", "learning"]).unwrap();
    Resources {
        profiles: vec![train_profile(
            &"the quick brown fox jumps over the lazy dog and rests in the shade ".repeat(15),
            "en",
        )
        .unwrap()],
        lexicon: Some(lexicon),
        term_lexicon: Some(terms),
        stoplist: Some(StopList::from_words(["the", "a", "an", "and", "of", "at"])),
        abbreviations: vec!["Dr".to_string()],
    }
}

pub fn demo_vectors() -> VectorModel {
    VectorModel::parse(
        "5 3\ncat 0.9 0.8 0.1\nkitten 0.45 0.4 0.05\ndog 0.8 0.7 0.0\ncomputer 0.1 0.0 0.9\nsoftware 0.0 0.1 0.85\n",
    )
    .unwrap()
}

pub fn test_kernel() -> Kernel {
    Kernel::builder()
        .resources(test_resources())
        .vectors(demo_vectors())
        .node_id("test-node")
        .coordinator_config(CoordinatorConfig {
            retry_backoff: std::time::Duration::from_millis(5),
            request_timeout: std::time::Duration::from_secs(5),
            ..CoordinatorConfig::default()
        })
        .build()
        .unwrap()
}

type Responder = dyn Fn(DocumentEnvelope) -> Result<DocumentEnvelope, (u16, String, String)>
    + Send
    + Sync
    + 'static;

/// A bare-bones HTTP/1.1 server standing in for a remote atomic service:
/// answers `GET /health` with 200 and `POST /process` with the transformed
/// envelope, counting process invocations.
pub struct StubService {
    addr: SocketAddr,
    pub hits: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl StubService {
    pub fn spawn<F>(transform: F) -> StubService
    where
        F: Fn(DocumentEnvelope) -> Result<DocumentEnvelope, (u16, String, String)>
            + Send
            + Sync
            + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub");
        let addr = listener.local_addr().expect("stub addr");
        let hits = Arc::new(AtomicUsize::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let transform: Arc<Responder> = Arc::new(transform);

        let thread = {
            let hits = Arc::clone(&hits);
            let stop = Arc::clone(&stop);
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let hits = Arc::clone(&hits);
                    let transform = Arc::clone(&transform);
                    std::thread::spawn(move || handle_connection(stream, &hits, &transform));
                }
            })
        };
        StubService {
            addr,
            hits,
            stop,
            thread: Some(thread),
        }
    }

    /// A stub that echoes envelopes back with a marker attribute set.
    pub fn spawn_echo(marker: &str) -> StubService {
        let marker = marker.to_string();
        Self::spawn(move |mut env| {
            env.attrs
                .insert("stub".to_string(), serde_json::json!(marker));
            Ok(env)
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn process_hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for StubService {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

fn handle_connection(mut stream: TcpStream, hits: &AtomicUsize, transform: &Arc<Responder>) {
    let Some((path, body)) = read_request(&mut stream) else {
        return;
    };
    let (status, reason, body) = if path.starts_with("/health") {
        (200, "OK", br#"{"status":"ok"}"#.to_vec())
    } else if path.starts_with("/process") {
        hits.fetch_add(1, Ordering::SeqCst);
        match decode_envelope(&body) {
            Ok(env) => match transform(env) {
                Ok(out) => (200, "OK", encode_envelope(&out)),
                Err((status, code, message)) => (
                    status,
                    "Error",
                    serde_json::to_vec(&serde_json::json!({
                        "code": code,
                        "message": message,
                    }))
                    .unwrap(),
                ),
            },
            Err(e) => (
                400,
                "Bad Request",
                serde_json::to_vec(&serde_json::json!({
                    "code": "malformed_envelope",
                    "message": e.to_string(),
                }))
                .unwrap(),
            ),
        }
    } else {
        (404, "Not Found", b"{}".to_vec())
    };
    let _ = write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
        body.len()
    );
    let _ = stream.write_all(&body);
}

/// Minimal HTTP request reader: header block plus a Content-Length body.
fn read_request(stream: &mut TcpStream) -> Option<(String, Vec<u8>)> {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 1024];
    let header_end = loop {
        if let Some(pos) = find_header_end(&buf) {
            break pos;
        }
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            return None;
        }
        buf.extend_from_slice(&chunk[..n]);
    };
    let header_text = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let mut lines = header_text.lines();
    let request_line = lines.next()?;
    let path = request_line.split_whitespace().nth(1)?.to_string();
    let content_length = lines
        .filter_map(|l| {
            let (name, value) = l.split_once(':')?;
            name.eq_ignore_ascii_case("content-length")
                .then(|| value.trim().parse::<usize>().ok())?
        })
        .next()
        .unwrap_or(0);
    let mut body = buf[header_end + 4..].to_vec();
    while body.len() < content_length {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            break;
        }
        body.extend_from_slice(&chunk[..n]);
    }
    body.truncate(content_length);
    Some((path, body))
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n")
}
