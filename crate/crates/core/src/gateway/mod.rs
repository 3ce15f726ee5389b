//! Prompt rendering, chat completion (HTTP or deterministic mock), and
//! line-oriented output parsing.
//!
//! The gateway bounds in-flight requests internally, retries transient
//! failures with exponential backoff, and never interleaves responses:
//! `complete_many` returns results in request order.

mod http;
mod lines;
mod mock;
mod template;

pub use http::HttpBackend;
pub use lines::parse_lines;
pub use mock::{prompt_key, MockBackend, MockFixture};
pub use template::PromptTemplate;

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use http::TransportOutcome;

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("template `{template}` is missing variable `{variable}`")]
    MissingVariable { template: String, variable: String },
    #[error("template `{template}` body uses undeclared placeholder `{placeholder}`")]
    UnknownPlaceholder { template: String, placeholder: String },
    #[error("template `{template}` has a malformed placeholder near `{{{fragment}`")]
    MalformedPlaceholder { template: String, fragment: String },
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
    #[error("line count {got} deviates from expected {expected} beyond tolerance")]
    CountMismatch { got: usize, expected: usize },
    #[error("mock fixture has no reply for prompt hash {hash} (prompt starts: {preview:?})")]
    MockReplyMissing { hash: String, preview: String },
    #[error("failed to read mock fixture {path}: {source}")]
    FixtureIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("mock fixture {path} is not valid JSON: {source}")]
    FixtureJson {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

/// Connection settings for an OpenAI-compatible endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub base_url: String,
    /// Name of the environment variable holding the API key. The key itself
    /// never appears in configs or manifests.
    pub api_key_env_name: String,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout() -> f64 {
    60.0
}
fn default_retries() -> u32 {
    3
}
fn default_in_flight() -> usize {
    4
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            api_key_env_name: "OPENAI_API_KEY".into(),
            model: "gpt-4".into(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            max_in_flight: default_in_flight(),
        }
    }
}

/// One completion request: a fully rendered prompt plus sampling settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CompletionRequest {
    pub fn new(model: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            prompt: prompt.into(),
            temperature: 0.8,
            max_tokens: 2048,
            seed: None,
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }
}

enum Backend {
    Http(HttpBackend),
    Mock(MockBackend),
}

/// Counting semaphore; `std` has none and this needs ~20 lines.
struct Gate {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) {
        let mut permits = self.permits.lock().expect("gate lock");
        while *permits == 0 {
            permits = self.freed.wait(permits).expect("gate wait");
        }
        *permits -= 1;
    }

    fn release(&self) {
        let mut permits = self.permits.lock().expect("gate lock");
        *permits += 1;
        self.freed.notify_one();
    }
}

/// Base delay for exponential backoff between retry attempts.
const BACKOFF_BASE_MS: u64 = 100;
const BACKOFF_CAP_MS: u64 = 2_000;

/// A chat-completion gateway safe for concurrent use. The in-flight bound
/// covers the whole request including retries.
pub struct Gateway {
    config: GatewayConfig,
    backend: Backend,
    gate: Gate,
}

impl Gateway {
    pub fn http(config: GatewayConfig) -> Self {
        let backend = Backend::Http(HttpBackend::new(&config));
        let gate = Gate::new(config.max_in_flight);
        Self {
            config,
            backend,
            gate,
        }
    }

    pub fn mock(config: GatewayConfig, fixture: MockFixture) -> Self {
        let gate = Gate::new(config.max_in_flight);
        Self {
            config,
            backend: Backend::Mock(MockBackend::new(fixture)),
            gate,
        }
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    /// Convenience constructor for a request against this gateway's model.
    pub fn request(&self, prompt: impl Into<String>) -> CompletionRequest {
        CompletionRequest::new(self.config.model.clone(), prompt)
    }

    /// Sends one request and returns the assistant message text. Transient
    /// failures (429, 5xx, timeouts) are retried with exponential backoff up
    /// to `max_retries`; the mock backend replies immediately.
    pub fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        if req.prompt.is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        self.gate.acquire();
        let result = self.complete_inner(req);
        self.gate.release();
        result
    }

    fn complete_inner(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        match &self.backend {
            Backend::Mock(mock) => mock.reply(&req.prompt),
            Backend::Http(http) => {
                let mut last: Option<GatewayError> = None;
                for attempt in 0..=self.config.max_retries {
                    if attempt > 0 {
                        let delay = (BACKOFF_BASE_MS << (attempt - 1)).min(BACKOFF_CAP_MS);
                        std::thread::sleep(Duration::from_millis(delay));
                    }
                    match http.complete_once(req) {
                        Ok(text) => return Ok(text),
                        Err(TransportOutcome::Fatal(err)) => return Err(err),
                        Err(TransportOutcome::Transient(err)) => last = Some(err),
                    }
                }
                let last = last.expect("at least one attempt ran");
                Err(GatewayError::RetriesExhausted {
                    attempts: self.config.max_retries + 1,
                    last: last.to_string(),
                })
            }
        }
    }

    /// Runs many requests with bounded parallelism; results come back in
    /// request order regardless of completion order.
    pub fn complete_many(&self, reqs: &[CompletionRequest]) -> Vec<Result<String, GatewayError>> {
        std::thread::scope(|scope| {
            let handles: Vec<_> = reqs
                .iter()
                .map(|req| scope.spawn(move || self.complete(req)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker not poisoned"))
                .collect()
        })
    }
}
