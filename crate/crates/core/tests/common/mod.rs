#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use prevsim::backend::{Backend, BackendInfo, CompletionRequest, CompletionResult};
use prevsim::error::BackendError;
use prevsim::ingest::{parse_corpus, write_survey, Dataset, DEFAULT_NAMES};
use prevsim::synth::{synthetic_survey, SynthSpec};

/// Minimal HTTP/1.1 server answering chat-completion requests from a script.
/// `script(n)` gives the status for the n-th request (0-based).
pub struct FaultServer {
    pub url: String,
    pub arrivals: Arc<Mutex<Vec<Instant>>>,
    pub peak: Arc<AtomicUsize>,
    pub requests: Arc<AtomicUsize>,
}

pub fn chat_body(content: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": content}}],
        "usage": {"prompt_tokens": 1, "completion_tokens": 1, "total_tokens": 2}
    })
    .to_string()
}

fn read_request(stream: &mut TcpStream) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        if let Some((k, v)) = l.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body)
}

impl FaultServer {
    pub fn start<F>(script: F, hold: Duration) -> FaultServer
    where
        F: Fn(usize) -> u16 + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let arrivals = Arc::new(Mutex::new(Vec::new()));
        let peak = Arc::new(AtomicUsize::new(0));
        let requests = Arc::new(AtomicUsize::new(0));
        let in_flight = Arc::new(AtomicUsize::new(0));
        let script = Arc::new(script);
        {
            let (arrivals, peak, requests) = (arrivals.clone(), peak.clone(), requests.clone());
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    let Ok(mut stream) = stream else { continue };
                    let (arrivals, peak, requests, in_flight, script) = (
                        arrivals.clone(),
                        peak.clone(),
                        requests.clone(),
                        in_flight.clone(),
                        script.clone(),
                    );
                    std::thread::spawn(move || {
                        if read_request(&mut stream).is_err() {
                            return;
                        }
                        let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                        peak.fetch_max(now, Ordering::SeqCst);
                        arrivals.lock().unwrap().push(Instant::now());
                        let n = requests.fetch_add(1, Ordering::SeqCst);
                        std::thread::sleep(hold);
                        let status = script(n);
                        let body = if status == 200 {
                            chat_body("ok")
                        } else {
                            r#"{"error":{"message":"rate limited"}}"#.to_string()
                        };
                        in_flight.fetch_sub(1, Ordering::SeqCst);
                        let _ = write!(
                            stream,
                            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                            body.len()
                        );
                        let _ = stream.flush();
                    });
                }
            });
        }
        FaultServer {
            url,
            arrivals,
            peak,
            requests,
        }
    }

    pub fn gaps(&self) -> Vec<Duration> {
        let a = self.arrivals.lock().unwrap();
        a.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Backend wrapper that records every prompt it sees.
pub struct Recording<B> {
    pub inner: B,
    pub prompts: Mutex<Vec<String>>,
}

impl<B> Recording<B> {
    pub fn new(inner: B) -> Recording<B> {
        Recording {
            inner,
            prompts: Mutex::new(Vec::new()),
        }
    }
}

impl<B: Backend> Backend for Recording<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        self.prompts.lock().unwrap().push(request.prompt.clone());
        self.inner.complete(request)
    }

    fn info(&self) -> BackendInfo {
        self.inner.info()
    }
}

pub fn dataset(spec: &SynthSpec) -> Dataset {
    Dataset::enrich(synthetic_survey(spec), &parse_corpus(DEFAULT_NAMES), spec.seed).unwrap()
}

pub fn write_synthetic(dir: &Path, spec: &SynthSpec) -> PathBuf {
    let path = dir.join("survey.csv");
    write_survey(&synthetic_survey(spec), std::fs::File::create(&path).unwrap()).unwrap();
    path
}

/// Every file under `root`, as (relative path, bytes), sorted by path.
pub fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
