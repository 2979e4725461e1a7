//! HTTP client for a log-probability sidecar.
//!
//! Wire protocol:
//!
//! * `POST /v1/logprobs` with `{"model", "mode", "context", "target"}` answers
//!   `{"tokens": [...], "logprobs": [...], "token_count": n}`.
//! * `GET /v1/models` answers `{"models": [{"id", "modes", "context_window"}]}`.
//! * `GET /healthz` answers 200 once the models are loaded, 503 before.
//! * Errors are 4xx/5xx with `{"error": "..."}`.
//!
//! The server joins a non-empty context and the target with a single space,
//! tokenizes the two segments separately, and truncates context from the left
//! when the window is exceeded. Transport failures and 5xx answers are retried
//! with exponential backoff; 4xx answers are final.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendDescriptor, LmBackend, ScoringMode, TokenLogProbs};
use crate::error::BackendError;

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// e.g. `http://127.0.0.1:8000`
    pub base_url: String,
    pub model: String,
    pub max_in_flight: usize,
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub backoff: Duration,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteConfig {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            max_in_flight: 8,
            max_retries: 3,
            backoff: Duration::from_millis(250),
            timeout: Duration::from_secs(120),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct LogprobsRequest<'a> {
    pub model: &'a str,
    pub mode: ScoringMode,
    pub context: &'a str,
    pub target: &'a str,
}

#[derive(Debug, Deserialize)]
pub struct LogprobsResponse {
    pub tokens: Vec<String>,
    pub logprobs: Vec<f64>,
    pub token_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServedModel {
    pub id: String,
    pub modes: Vec<ScoringMode>,
    #[serde(default)]
    pub context_window: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct ModelsResponse {
    models: Vec<ServedModel>,
}

#[derive(Debug, Deserialize)]
struct ErrorBody {
    error: String,
}

/// Counting gate bounding concurrent requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Gate {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Thread-safe; share by reference across scoring workers.
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    gate: Gate,
}

enum Attempt<T> {
    Done(T),
    Retry(String),
    Fail(BackendError),
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        let gate = Gate::new(config.max_in_flight);
        RemoteBackend {
            config,
            agent,
            gate,
        }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.base_url, path)
    }

    fn with_retries<T>(&self, mut once: impl FnMut() -> Attempt<T>) -> Result<T, BackendError> {
        let _permit = self.gate.acquire();
        let mut delay = self.config.backoff;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match once() {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(message) => {
                    if attempts > self.config.max_retries {
                        return Err(BackendError::Unavailable {
                            url: self.config.base_url.clone(),
                            attempts,
                            retry_after: delay,
                            message,
                        });
                    }
                    thread::sleep(delay);
                    delay = delay.saturating_mul(2);
                }
            }
        }
    }

    fn classify_response(
        &self,
        result: Result<ureq::http::Response<ureq::Body>, ureq::Error>,
        mode: Option<ScoringMode>,
    ) -> Attempt<ureq::http::Response<ureq::Body>> {
        let mut resp = match result {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        if status < 400 {
            return Attempt::Done(resp);
        }
        let message = resp
            .body_mut()
            .read_to_string()
            .ok()
            .and_then(|b| {
                serde_json::from_str::<ErrorBody>(&b)
                    .map(|e| e.error)
                    .ok()
                    .or(Some(b))
            })
            .unwrap_or_default();
        match (status, mode) {
            (422, Some(mode)) => Attempt::Fail(BackendError::UnsupportedMode {
                backend: format!("remote:{}", self.config.model),
                mode,
            }),
            (s, _) if s >= 500 => Attempt::Retry(format!("HTTP {s}: {message}")),
            (s, _) => Attempt::Fail(BackendError::Rejected { status: s, message }),
        }
    }

    /// `Ok(true)` when `/healthz` answers 200, `Ok(false)` for any other status.
    pub fn health(&self) -> Result<bool, BackendError> {
        self.with_retries(|| match self.agent.get(self.url("/healthz")).call() {
            Ok(r) => Attempt::Done(r.status().as_u16() == 200),
            Err(e) => Attempt::Retry(e.to_string()),
        })
    }

    /// Retries until `/healthz` answers 200 or the retry budget runs out.
    pub fn wait_ready(&self) -> Result<(), BackendError> {
        self.with_retries(|| match self.agent.get(self.url("/healthz")).call() {
            Ok(r) if r.status().as_u16() == 200 => Attempt::Done(()),
            Ok(r) => Attempt::Retry(format!(
                "health check answered HTTP {}",
                r.status().as_u16()
            )),
            Err(e) => Attempt::Retry(e.to_string()),
        })
    }

    pub fn models(&self) -> Result<Vec<ServedModel>, BackendError> {
        let mut resp = self.with_retries(|| {
            self.classify_response(self.agent.get(self.url("/v1/models")).call(), None)
        })?;
        resp.body_mut()
            .read_json::<ModelsResponse>()
            .map(|m| m.models)
            .map_err(|e| BackendError::Protocol(e.to_string()))
    }
}

impl LmBackend for RemoteBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            backend: "remote".to_string(),
            model: self.config.model.clone(),
            tokenizer_note: "server tokenizer; context and target tokenized separately, single space inserted after non-empty context; context truncated from the left"
                .to_string(),
        }
    }

    /// The server is authoritative; an unsupported mode surfaces as a 422.
    fn supports(&self, _mode: ScoringMode) -> bool {
        true
    }

    fn score(
        &self,
        mode: ScoringMode,
        context: &str,
        target: &str,
    ) -> Result<TokenLogProbs, BackendError> {
        let req = LogprobsRequest {
            model: &self.config.model,
            mode,
            context,
            target,
        };
        let mut resp = self.with_retries(|| {
            self.classify_response(
                self.agent.post(self.url("/v1/logprobs")).send_json(&req),
                Some(mode),
            )
        })?;
        let body: LogprobsResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        let declared = body.token_count;
        let lp = TokenLogProbs::new(body.tokens, body.logprobs)?;
        if lp.token_count != declared {
            return Err(BackendError::Protocol(format!(
                "token_count {declared} disagrees with {} returned tokens",
                lp.token_count
            )));
        }
        Ok(lp)
    }
}
