// SPDX-License-Identifier: Apache-2.0

//! Minimal chat-completion client.
//!
//! [`Gateway`] owns the retry policy and the API-key lookup; the wire work is
//! delegated to a [`Transport`]. Two transports ship with the crate: the
//! OpenAI-compatible HTTP client and a transcript-driven mock that performs no
//! I/O at all, so every pipeline stage can be exercised offline.

mod http;
mod mock;

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::HttpTransport;
pub use mock::{ScriptedFailure, ScriptedTransport, TranscriptEntry, TranscriptTransport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable that holds the API key.
    pub api_key_env: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_base_secs: f64,
    pub transport: TransportKind,
    /// Transcript file for the mock transport.
    pub transcript: Option<PathBuf>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o-mini".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 120.0,
            max_retries: 3,
            backoff_base_secs: 1.0,
            transport: TransportKind::Http,
            transcript: None,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.timeout_secs > 0.0) {
            return Err(GatewayError::InvalidConfig(
                "timeout must be positive".into(),
            ));
        }
        if !(self.backoff_base_secs >= 0.0) {
            return Err(GatewayError::InvalidConfig(
                "backoff base must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: Option<String>,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Number of completions wanted.
    pub n: u32,
}

impl ChatRequest {
    pub fn new(user: impl Into<String>) -> Self {
        Self {
            system: None,
            user: user.into(),
            temperature: 0.3,
            max_tokens: 512,
            n: 1,
        }
    }

    pub fn with_n(mut self, n: u32) -> Self {
        self.n = n;
        self
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_max_tokens(mut self, m: u32) -> Self {
        self.max_tokens = m;
        self
    }

    pub fn with_system(mut self, s: impl Into<String>) -> Self {
        self.system = Some(s.into());
        self
    }
}

/// What went wrong on a single attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportFailure {
    Timeout,
    Connect(String),
    Status { code: u16, body: String },
    Malformed(String),
}

impl TransportFailure {
    fn is_transient(&self) -> bool {
        match self {
            TransportFailure::Timeout | TransportFailure::Connect(_) => true,
            TransportFailure::Status { code, .. } => *code == 429 || *code >= 500,
            TransportFailure::Malformed(_) => false,
        }
    }
}

pub trait Transport: Send + Sync {
    /// Perform one request. May return fewer than `req.n` completions.
    fn send(
        &self,
        endpoint: &EndpointConfig,
        api_key: Option<&str>,
        req: &ChatRequest,
    ) -> Result<Vec<String>, TransportFailure>;

    /// Whether this transport talks to a real endpoint and needs a key.
    fn needs_api_key(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("transport error after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("invalid gateway configuration: {0}")]
    InvalidConfig(String),
}

/// Which transport [`Gateway::from_config`] builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    #[default]
    Http,
    Mock,
}

pub struct Gateway {
    endpoint: EndpointConfig,
    transport: Box<dyn Transport>,
    attempts: AtomicUsize,
    sleeper: Box<dyn Fn(Duration) + Send + Sync>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("endpoint", &self.endpoint)
            .field("attempts", &self.attempts)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(endpoint: EndpointConfig, transport: impl Transport + 'static) -> Self {
        Self {
            endpoint,
            transport: Box::new(transport),
            attempts: AtomicUsize::new(0),
            sleeper: Box::new(std::thread::sleep),
        }
    }

    /// Build the transport named by `cfg.transport`.
    pub fn from_config(cfg: &EndpointConfig) -> Result<Self, GatewayError> {
        cfg.validate()?;
        match cfg.transport {
            TransportKind::Http => Ok(Self::new(cfg.clone(), HttpTransport::new())),
            TransportKind::Mock => {
                let path = cfg.transcript.as_ref().ok_or_else(|| {
                    GatewayError::InvalidConfig("mock transport needs a transcript file".into())
                })?;
                let t = TranscriptTransport::from_file(path)
                    .map_err(|e| GatewayError::InvalidConfig(e.to_string()))?;
                Ok(Self::new(cfg.clone(), t))
            }
        }
    }

    /// Replace the backoff sleep, e.g. to record delays in tests.
    pub fn with_sleeper(mut self, f: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Box::new(f);
        self
    }

    pub fn endpoint(&self) -> &EndpointConfig {
        &self.endpoint
    }

    /// Total transport attempts made through this gateway.
    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::Relaxed)
    }

    fn api_key(&self) -> Result<Option<String>, GatewayError> {
        if !self.transport.needs_api_key() {
            return Ok(None);
        }
        match std::env::var(&self.endpoint.api_key_env) {
            Ok(k) if !k.trim().is_empty() => Ok(Some(k)),
            _ => Err(GatewayError::Auth(format!(
                "environment variable {} is not set",
                self.endpoint.api_key_env
            ))),
        }
    }

    /// Return exactly `req.n` completions.
    ///
    /// Transient failures (timeouts, connection errors, 429, 5xx) are retried
    /// up to `max_retries` times with delays of `backoff_base * 2^attempt`.
    /// Endpoints that return fewer choices than asked are called again for
    /// the remainder.
    pub fn complete(&self, req: &ChatRequest) -> Result<Vec<String>, GatewayError> {
        if req.n == 0 {
            return Err(GatewayError::InvalidConfig("n must be at least 1".into()));
        }
        if !(req.temperature >= 0.0) {
            return Err(GatewayError::InvalidConfig(
                "temperature must be non-negative".into(),
            ));
        }
        if req.max_tokens == 0 {
            return Err(GatewayError::InvalidConfig(
                "max_tokens must be positive".into(),
            ));
        }
        let key = self.api_key()?;
        let want = req.n as usize;
        let mut out = Vec::with_capacity(want);
        while out.len() < want {
            let mut sub = req.clone();
            sub.n = (want - out.len()) as u32;
            let got = self.send_with_retry(key.as_deref(), &sub)?;
            if got.is_empty() {
                return Err(GatewayError::MalformedResponse(
                    "response has no choices".into(),
                ));
            }
            out.extend(got.into_iter().take(sub.n as usize));
        }
        Ok(out)
    }

    fn send_with_retry(
        &self,
        key: Option<&str>,
        req: &ChatRequest,
    ) -> Result<Vec<String>, GatewayError> {
        let max = self.endpoint.max_retries;
        let mut attempt = 0u32;
        loop {
            self.attempts.fetch_add(1, Ordering::Relaxed);
            let failure = match self.transport.send(&self.endpoint, key, req) {
                Ok(texts) => return Ok(texts),
                Err(f) => f,
            };
            let attempts = attempt + 1;
            if failure.is_transient() && attempt < max {
                let delay = self.endpoint.backoff_base_secs * f64::from(1u32 << attempt.min(16));
                log::debug!("transient failure {failure:?}; retrying in {delay:.2}s");
                (self.sleeper)(Duration::from_secs_f64(delay));
                attempt += 1;
                continue;
            }
            return Err(match failure {
                TransportFailure::Status {
                    code: 401 | 403,
                    body,
                } => GatewayError::Auth(body),
                TransportFailure::Status { code: 429, .. } => {
                    GatewayError::RateLimited { attempts }
                }
                TransportFailure::Status { code, body } => GatewayError::Transport {
                    attempts,
                    message: format!("HTTP {code}: {body}"),
                },
                TransportFailure::Timeout => GatewayError::Transport {
                    attempts,
                    message: "timed out".into(),
                },
                TransportFailure::Connect(m) => GatewayError::Transport {
                    attempts,
                    message: m,
                },
                TransportFailure::Malformed(m) => GatewayError::MalformedResponse(m),
            });
        }
    }
}

/// Map `f` over `items` with at most `limit` calls in flight. Output order
/// matches input order regardless of completion order.
pub fn bounded_map<T, R, F>(items: &[T], limit: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let workers = limit.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(i, &items[i]);
                slots.lock().expect("slot lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("slot lock")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}
