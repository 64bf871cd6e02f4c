use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Backend, BackendInfo, CompletionRequest, CompletionResult, Usage};
use crate::error::BackendError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub system_prompt: Option<String>,
    pub max_concurrency: usize,
    pub max_retries: u32,
    pub base_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub timeout_secs: f64,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o-2024-08-06".into(),
            temperature: None,
            max_tokens: None,
            system_prompt: None,
            max_concurrency: 10,
            max_retries: 5,
            base_backoff_ms: 1000,
            max_backoff_ms: 60_000,
            timeout_secs: 120.0,
            api_key_env: "OPENAI_API_KEY".into(),
            api_key: None,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_concurrency < 1 {
            return Err(BackendError::Config("max_concurrency must be at least 1".into()));
        }
        if let Some(t) = self.temperature {
            if !(t.is_finite() && t >= 0.0) {
                return Err(BackendError::Config(format!("temperature {t} must be >= 0")));
            }
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(BackendError::Config("timeout must be positive".into()));
        }
        if self.endpoint.is_empty() {
            return Err(BackendError::Config("endpoint is empty".into()));
        }
        Ok(())
    }

    pub fn base_backoff(&self) -> Duration {
        Duration::from_millis(self.base_backoff_ms)
    }

    pub fn max_backoff(&self) -> Duration {
        Duration::from_millis(self.max_backoff_ms)
    }
}

/// Delay before retry `k` (0-based): `base * 2^k`, capped. No jitter.
pub fn backoff_delay(base: Duration, k: u32, cap: Duration) -> Duration {
    let factor = 1u32.checked_shl(k.min(31)).unwrap_or(u32::MAX);
    base.checked_mul(factor).unwrap_or(cap).min(cap)
}

/// Counting semaphore bounding in-flight requests.
struct Gate {
    cap: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().expect("gate poisoned");
        while *n >= self.cap {
            n = self.freed.wait(n).expect("gate poisoned");
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().expect("gate poisoned") -= 1;
        self.0.freed.notify_one();
    }
}

enum Failure {
    Retry(String),
    Timeout,
    Fatal(BackendError),
}

pub struct LiveBackend {
    config: BackendConfig,
    agent: ureq::Agent,
    gate: Gate,
    requests: AtomicUsize,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

impl LiveBackend {
    pub fn new(config: BackendConfig) -> Result<LiveBackend, BackendError> {
        config.validate()?;
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build();
        Ok(LiveBackend {
            gate: Gate {
                cap: config.max_concurrency,
                in_flight: Mutex::new(0),
                freed: Condvar::new(),
            },
            config,
            agent,
            requests: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    /// HTTP requests issued so far, retries included.
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }

    fn body(&self, request: &CompletionRequest) -> serde_json::Value {
        let mut messages = Vec::new();
        if let Some(system) = &self.config.system_prompt {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": request.prompt}));
        let mut body = json!({ "model": self.config.model, "messages": messages });
        if let Some(t) = request.temperature.or(self.config.temperature) {
            body["temperature"] = json!(t);
        }
        if let Some(m) = request.max_tokens.or(self.config.max_tokens) {
            body["max_tokens"] = json!(m);
        }
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<(String, Option<Usage>), Failure> {
        let _permit = self.gate.acquire();
        self.requests.fetch_add(1, Ordering::Relaxed);
        let mut req = self
            .agent
            .post(&self.config.endpoint)
            .set("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        match req.send_json(body) {
            Ok(resp) => {
                let parsed: ChatResponse = resp
                    .into_json()
                    .map_err(|e| Failure::Fatal(BackendError::Payload(e.to_string())))?;
                let text = parsed
                    .choices
                    .into_iter()
                    .next()
                    .and_then(|c| c.message.content)
                    .ok_or_else(|| Failure::Fatal(BackendError::Payload("no message content".into())))?;
                Ok((text, parsed.usage))
            }
            Err(ureq::Error::Status(status, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                if status == 429 || status == 408 || status >= 500 {
                    Err(Failure::Retry(format!("status {status}: {text}")))
                } else {
                    Err(Failure::Fatal(BackendError::Permanent { status, body: text }))
                }
            }
            Err(ureq::Error::Transport(t)) => {
                if is_timeout(&t) {
                    Err(Failure::Timeout)
                } else {
                    Err(Failure::Retry(t.to_string()))
                }
            }
        }
    }
}

fn is_timeout(t: &ureq::Transport) -> bool {
    use std::error::Error as _;
    let mut source = t.source();
    while let Some(e) = source {
        if let Some(io) = e.downcast_ref::<std::io::Error>() {
            if matches!(io.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) {
                return true;
            }
        }
        source = e.source();
    }
    t.to_string().contains("timed out")
}

impl Backend for LiveBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        let body = self.body(request);
        let started = Instant::now();
        let mut retry_delays = Vec::new();
        let mut attempts = 0;
        loop {
            attempts += 1;
            let failure = match self.attempt(&body) {
                Ok((text, usage)) => {
                    return Ok(CompletionResult {
                        text,
                        usage,
                        attempts,
                        latency: started.elapsed(),
                        retry_delays,
                    })
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(f) => f,
            };
            if attempts > self.config.max_retries {
                return Err(match failure {
                    Failure::Timeout => BackendError::Timeout { attempts },
                    Failure::Retry(last) => BackendError::Transient { attempts, last },
                    Failure::Fatal(e) => e,
                });
            }
            let delay = backoff_delay(
                self.config.base_backoff(),
                attempts - 1,
                self.config.max_backoff(),
            );
            retry_delays.push(delay);
            std::thread::sleep(delay);
        }
    }

    fn info(&self) -> BackendInfo {
        BackendInfo {
            kind: "live".into(),
            model: self.config.model.clone(),
            temperature: self.config.temperature,
            max_concurrency: self.config.max_concurrency,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let base = Duration::from_millis(100);
        let cap = Duration::from_millis(1000);
        let d: Vec<_> = (0..6).map(|k| backoff_delay(base, k, cap).as_millis()).collect();
        assert_eq!(d, vec![100, 200, 400, 800, 1000, 1000]);
        assert_eq!(backoff_delay(base, 200, cap), cap);
        assert!(d.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn config_validation() {
        let mut c = BackendConfig::default();
        assert!(c.validate().is_ok());
        c.max_concurrency = 0;
        assert!(c.validate().is_err());
        let c = BackendConfig {
            temperature: Some(-1.0),
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn request_body_shape() {
        let b = LiveBackend::new(BackendConfig {
            system_prompt: Some("sys".into()),
            temperature: Some(0.7),
            ..Default::default()
        })
        .unwrap();
        let body = b.body(&CompletionRequest::new("hello").with_seed(5));
        assert_eq!(body["model"], "gpt-4o-2024-08-06");
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "hello");
        assert_eq!(body["temperature"], 0.7);
        assert_eq!(body["seed"], 5);
        let plain = LiveBackend::new(BackendConfig::default()).unwrap();
        assert!(plain.body(&CompletionRequest::new("x")).get("temperature").is_none());
    }
}
