#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use clipse_core::bench::synthetic_index;
use clipse_core::{EmbeddingProvider, ReferenceEmbedder, SearchIndex};
use clipse_server::{start, AppState, Backend, RunningServer};

pub struct Reply {
    pub status: u16,
    pub headers: String,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).expect("JSON body")
    }

    pub fn header(&self, name: &str) -> Option<String> {
        self.headers.lines().find_map(|l| {
            let (k, v) = l.split_once(':')?;
            k.eq_ignore_ascii_case(name).then(|| v.trim().to_string())
        })
    }
}

/// Sends `target` verbatim (no normalization, no encoding) and reads the
/// whole response.
pub fn raw_request(addr: SocketAddr, method: &str, target: &str, body: Option<&str>) -> Reply {
    let mut stream = TcpStream::connect(addr).unwrap();
    stream
        .set_read_timeout(Some(Duration::from_secs(60)))
        .unwrap();
    let body = body.unwrap_or("");
    write!(
        stream,
        "{method} {target} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\
         Content-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw).unwrap();
    let split = raw
        .windows(4)
        .position(|w| w == b"\r\n\r\n")
        .expect("header terminator");
    let headers = String::from_utf8_lossy(&raw[..split]).to_string();
    let status = headers
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .expect("status code");
    let mut body = raw[split + 4..].to_vec();
    if headers
        .to_ascii_lowercase()
        .contains("transfer-encoding: chunked")
    {
        body = dechunk(&body);
    }
    Reply {
        status,
        headers,
        body,
    }
}

fn dechunk(mut data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    loop {
        let line_end = data.windows(2).position(|w| w == b"\r\n").unwrap();
        let size =
            usize::from_str_radix(std::str::from_utf8(&data[..line_end]).unwrap().trim(), 16)
                .unwrap();
        data = &data[line_end + 2..];
        if size == 0 {
            return out;
        }
        out.extend_from_slice(&data[..size]);
        data = &data[size + 2..];
    }
}

pub fn get(addr: SocketAddr, target: &str) -> Reply {
    raw_request(addr, "GET", target, None)
}

/// Percent-encodes a query component.
pub fn encode(s: &str) -> String {
    s.bytes()
        .map(|b| match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                (b as char).to_string()
            }
            _ => format!("%{b:02X}"),
        })
        .collect()
}

pub fn provider(d: usize) -> Arc<dyn EmbeddingProvider> {
    Arc::new(ReferenceEmbedder::new(d).unwrap())
}

pub fn index(n: usize, d: usize, seed: u64) -> SearchIndex {
    synthetic_index(provider(d).as_ref(), n, seed).unwrap()
}

/// A server with `index` already loaded.
pub fn ready_server(index: SearchIndex, images_root: &Path) -> (RunningServer, AppState) {
    let state = AppState::new(
        provider(index.dimension()),
        images_root.to_path_buf(),
        20,
        None,
    );
    state.set_ready(Backend::Single(index)).unwrap();
    let server = start(state.clone(), "127.0.0.1:0").unwrap();
    (server, state)
}

pub fn wait_ready(addr: SocketAddr) {
    let deadline = Instant::now() + Duration::from_secs(30);
    loop {
        let status = get(addr, "/api/health").status;
        if status == 200 {
            return;
        }
        assert!(status == 503, "health returned {status}");
        assert!(Instant::now() < deadline, "index never became ready");
        std::thread::sleep(Duration::from_millis(10));
    }
}
