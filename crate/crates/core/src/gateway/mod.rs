//! Backend-agnostic text completion.
//!
//! A [`Gateway`] wraps a [`CompletionBackend`] with stop-sequence truncation,
//! bounded retries with exponential backoff, and a cap on in-flight requests.

mod http;
mod mock;

use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpBackend, HttpConfig, ENV_AUTH, ENV_ENDPOINT};
pub use mock::{prompt_hash, MockBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_new_tokens: u32,
    pub temperature: f64,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
    /// 0 for the first draw of a prompt, k for the k-th fresh redraw.
    /// Network backends ignore it (sampling temperature supplies the
    /// variation); the mock uses it to address per-redraw transcript entries.
    #[serde(default)]
    pub sample: u32,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, settings: &GenerationSettings) -> Self {
        Self {
            prompt: prompt.into(),
            max_new_tokens: settings.max_new_tokens,
            temperature: settings.temperature,
            stop_sequences: Vec::new(),
            sample: 0,
        }
    }

    pub fn with_stops<I, S>(mut self, stops: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.stop_sequences = stops.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_sample(mut self, sample: u32) -> Self {
        self.sample = sample;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.prompt.is_empty() {
            return Err(GatewayError::InvalidRequest("prompt must be non-empty".into()));
        }
        if self.max_new_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_new_tokens must be positive".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest("temperature must be a non-negative number".into()));
        }
        if self.stop_sequences.iter().any(String::is_empty) {
            return Err(GatewayError::InvalidRequest("stop sequences must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResponse {
    /// Continuation cut before the first stop sequence.
    pub text: String,
    pub backend_id: String,
    pub latency: Duration,
    /// 1-based attempt number that succeeded.
    pub attempt: u32,
    /// The stop sequence that ended the text, if any.
    pub stopped_by: Option<String>,
}

/// Decoding settings for generation requests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationSettings {
    pub temperature: f64,
    pub max_new_tokens: u32,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            max_new_tokens: 256,
        }
    }
}

/// Failure reported by a backend for a single attempt.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    /// Connection failures, timeouts, 429 and 5xx responses.
    #[error("transient: {0}")]
    Transient(String),
    #[error("status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("no transcript entry for prompt hash {0}")]
    MockMiss(String),
    #[error("{0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend unavailable after {attempts} attempts: {last_error}")]
    Unavailable { attempts: u32, last_error: String },
    #[error("request rejected with status {status}: {body_excerpt}")]
    Request { status: u16, body_excerpt: String },
    #[error("mock transcript has no entry for prompt hash {hash}")]
    MockMiss { hash: String },
    #[error("bad backend response: {0}")]
    Protocol(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

pub trait CompletionBackend: Send + Sync {
    fn id(&self) -> String;

    /// Raw continuation for one attempt, before stop-sequence truncation.
    fn generate(&self, req: &CompletionRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Total attempts per request, including the first.
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles for each further attempt.
    #[serde(with = "millis")]
    pub backoff_base: Duration,
    #[serde(with = "millis")]
    pub backoff_cap: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            backoff_base: Duration::from_millis(500),
            backoff_cap: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn delay_before(&self, attempt: u32) -> Duration {
        if attempt <= 1 {
            return Duration::ZERO;
        }
        let factor = 1u32.checked_shl(attempt - 2).unwrap_or(u32::MAX);
        self.backoff_base.saturating_mul(factor).min(self.backoff_cap)
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// Counting semaphore bounding in-flight requests.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slot lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("slot lock");
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("slot lock") += 1;
        self.0.cv.notify_one();
    }
}

/// Cuts `text` before the earliest occurrence of any stop sequence.
pub fn truncate_at_stop(text: &str, stops: &[String]) -> (String, Option<String>) {
    let first = stops
        .iter()
        .filter_map(|s| text.find(s.as_str()).map(|pos| (pos, s)))
        .min_by(|a, b| a.0.cmp(&b.0).then(b.1.len().cmp(&a.1.len())));
    match first {
        Some((pos, stop)) => (text[..pos].to_string(), Some(stop.clone())),
        None => (text.to_string(), None),
    }
}

pub struct Gateway {
    backend: Arc<dyn CompletionBackend>,
    retry: RetryPolicy,
    slots: Slots,
    concurrency: usize,
}

impl Gateway {
    pub fn new(backend: Arc<dyn CompletionBackend>, retry: RetryPolicy, concurrency: usize) -> Self {
        Self {
            backend,
            retry,
            slots: Slots::new(concurrency),
            concurrency: concurrency.max(1),
        }
    }

    pub fn backend_id(&self) -> String {
        self.backend.id()
    }

    pub fn concurrency(&self) -> usize {
        self.concurrency
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        self.retry
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        req.validate()?;
        let _slot = self.slots.acquire();
        let started = Instant::now();
        let attempts = self.retry.max_attempts.max(1);
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            let delay = self.retry.delay_before(attempt);
            if !delay.is_zero() {
                thread::sleep(delay);
            }
            match self.backend.generate(req) {
                Ok(raw) => {
                    let (text, stopped_by) = truncate_at_stop(&raw, &req.stop_sequences);
                    return Ok(CompletionResponse {
                        text,
                        backend_id: self.backend.id(),
                        latency: started.elapsed(),
                        attempt,
                        stopped_by,
                    });
                }
                Err(BackendError::Transient(msg)) => {
                    tracing::debug!(attempt, "transient backend failure: {msg}");
                    last_error = msg;
                }
                Err(BackendError::Status { status, body }) => {
                    let body_excerpt: String = body.chars().take(200).collect();
                    return Err(GatewayError::Request { status, body_excerpt });
                }
                Err(BackendError::MockMiss(hash)) => return Err(GatewayError::MockMiss { hash }),
                Err(BackendError::Protocol(msg)) => return Err(GatewayError::Protocol(msg)),
            }
        }
        Err(GatewayError::Unavailable { attempts, last_error })
    }
}
