#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use rand::seq::IndexedRandom;
use rand::Rng;
use sgr_core::graph::{SceneGraph, Triple};
use sgr_core::metrics::SynonymLexicon;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

const ENTITIES: &[&str] = &["man", "woman", "dog", "cat", "table", "red car", "tree", "sky", "boat", "bench"];
const RELATIONS: &[&str] = &["on", "near", "holds", "under", "is", "has", "next to", "left of"];
const ATTRIBUTES: &[&str] = &["red", "small", "wooden", "2", "tall", "blue"];

pub fn random_triple<R: Rng>(rng: &mut R) -> Triple {
    let s = ENTITIES.choose(rng).unwrap();
    if rng.random_bool(0.25) {
        Triple::new(*s, "is", *ATTRIBUTES.choose(rng).unwrap()).unwrap()
    } else {
        let r = RELATIONS.choose(rng).unwrap();
        Triple::new(*s, *r, *ENTITIES.choose(rng).unwrap()).unwrap()
    }
}

/// Graph of up to `max` distinct triples over a small vocabulary, so that
/// independently drawn graphs overlap.
pub fn random_graph<R: Rng>(rng: &mut R, max: usize) -> SceneGraph {
    let n = rng.random_range(0..=max);
    (0..n).map(|_| random_triple(rng)).collect()
}

pub fn nonempty_graph<R: Rng>(rng: &mut R, max: usize) -> SceneGraph {
    loop {
        let g = random_graph(rng, max);
        if !g.is_empty() {
            return g;
        }
    }
}

// ---- brute-force oracles ----

/// Largest injective matching found by trying every assignment.
pub fn brute_matching(pred: &[Triple], gold: &[Triple], lex: &SynonymLexicon) -> usize {
    fn go(i: usize, pred: &[Triple], gold: &[Triple], used: &mut Vec<bool>, lex: &SynonymLexicon) -> usize {
        if i == pred.len() {
            return 0;
        }
        let mut best = go(i + 1, pred, gold, used, lex);
        for j in 0..gold.len() {
            if !used[j] && lex.triples_match(&pred[i], &gold[j]) {
                used[j] = true;
                best = best.max(1 + go(i + 1, pred, gold, used, lex));
                used[j] = false;
            }
        }
        best
    }
    go(0, pred, gold, &mut vec![false; gold.len()], lex)
}

pub fn brute_f1(pred: &SceneGraph, gold: &SceneGraph, lex: &SynonymLexicon) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let p: Vec<Triple> = pred.iter().cloned().collect();
    let g: Vec<Triple> = gold.iter().cloned().collect();
    let m = brute_matching(&p, &g, lex) as f64;
    let (precision, recall) = (m / p.len() as f64, m / g.len() as f64);
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn sign(x: f64) -> i64 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Kendall tau-b from all O(n^2) pairs.
pub fn brute_tau_b(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut s, mut n1, mut n2, mut n0) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            n0 += 1;
            let (a, b) = (sign(x[i] - x[j]), sign(y[i] - y[j]));
            s += a * b;
            if a == 0 {
                n1 += 1;
            }
            if b == 0 {
                n2 += 1;
            }
        }
    }
    s as f64 / (((n0 - n1) * (n0 - n2)) as f64).sqrt()
}

/// Mid-rank by counting smaller and equal values.
fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&a| {
            let less = v.iter().filter(|&&b| b < a).count() as f64;
            let equal = v.iter().filter(|&&b| b == a).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn brute_rho(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (brute_ranks(x), brute_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

// ---- stub HTTP server ----

pub struct Request {
    pub method: String,
    pub path: String,
    pub body: String,
}

pub struct Response {
    pub status: u16,
    pub body: String,
}

impl Response {
    pub fn json(body: impl Into<String>) -> Self {
        Self {
            status: 200,
            body: body.into(),
        }
    }

    pub fn status(status: u16, body: impl Into<String>) -> Self {
        Self {
            status,
            body: body.into(),
        }
    }
}

/// Single-threaded HTTP/1.1 server answering one request per connection.
/// Stops when dropped.
pub struct StubServer {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    addr: std::net::SocketAddr,
    handle: Option<thread::JoinHandle<()>>,
}

impl StubServer {
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(&Request) -> Response + Send + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let stop = Arc::new(AtomicBool::new(false));
        let hits = Arc::new(AtomicUsize::new(0));
        let (stop2, hits2) = (stop.clone(), hits.clone());
        let handle = thread::spawn(move || {
            for stream in listener.incoming() {
                if stop2.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                hits2.fetch_add(1, Ordering::SeqCst);
                let _ = serve(stream, &handler);
            }
        });
        Self {
            url: format!("http://{addr}"),
            hits,
            stop,
            addr,
            handle: Some(handle),
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve<F: Fn(&Request) -> Response>(stream: TcpStream, handler: &F) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();
    let mut content_length = 0usize;
    loop {
        let mut header = String::new();
        if reader.read_line(&mut header)? == 0 || header.trim().is_empty() {
            break;
        }
        if let Some((k, v)) = header.split_once(':') {
            if k.trim().eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    let resp = handler(&Request {
        method,
        path,
        body: String::from_utf8_lossy(&body).into_owned(),
    });
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        resp.status,
        resp.body.len(),
        resp.body
    )?;
    stream.flush()
}

/// An address nothing listens on.
pub fn dead_endpoint() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    format!("http://{addr}")
}
