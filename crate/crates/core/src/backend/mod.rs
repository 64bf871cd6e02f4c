//! Completion backends.
//!
//! [`LiveBackend`] talks to an OpenAI-compatible chat-completions endpoint;
//! [`MockBackend`] is a deterministic stand-in used by tests and dry runs.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::BackendError;

mod live;
mod mock;

pub use live::{backoff_delay, BackendConfig, LiveBackend};
pub use mock::{mock_complete, MockBackend, StaticFeatures, DynamicFeatures};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    /// Sampling seed forwarded to backends that support one.
    pub seed: Option<u64>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> CompletionRequest {
        CompletionRequest {
            prompt: prompt.into(),
            ..Default::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> CompletionRequest {
        self.seed = Some(seed);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub total_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub text: String,
    pub usage: Option<Usage>,
    pub attempts: u32,
    pub latency: Duration,
    /// Backoff delays slept before each retry, in order.
    pub retry_delays: Vec<Duration>,
}

/// What a run records about the backend that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub kind: String,
    pub model: String,
    /// `None` means the endpoint default was used.
    pub temperature: Option<f64>,
    pub max_concurrency: usize,
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError>;

    fn info(&self) -> BackendInfo;
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        (**self).complete(request)
    }

    fn info(&self) -> BackendInfo {
        (**self).info()
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        (**self).complete(request)
    }

    fn info(&self) -> BackendInfo {
        (**self).info()
    }
}
