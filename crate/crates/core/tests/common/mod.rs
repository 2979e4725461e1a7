//! In-process mock of the log-probability sidecar.

#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};

/// Log-probability the mock assigns to the i-th target token.
pub fn mock_logprob(i: usize) -> f64 {
    -0.5 * (i as f64 + 1.0)
}

#[derive(Default)]
pub struct MockState {
    /// `/healthz` answers 503 this many times before turning healthy.
    pub unhealthy_checks: AtomicUsize,
    /// `/v1/logprobs` answers 500 this many times before working.
    pub failures: AtomicUsize,
    pub logprob_calls: AtomicUsize,
    pub in_flight: AtomicUsize,
    pub peak_in_flight: AtomicUsize,
    pub delay_ms: AtomicUsize,
    pub requests: Mutex<Vec<Value>>,
}

pub struct MockSidecar {
    pub url: String,
    pub state: Arc<MockState>,
}

async fn healthz(State(s): State<Arc<MockState>>) -> StatusCode {
    let remaining = s.unhealthy_checks.load(Ordering::SeqCst);
    if remaining > 0 {
        s.unhealthy_checks.store(remaining - 1, Ordering::SeqCst);
        StatusCode::SERVICE_UNAVAILABLE
    } else {
        StatusCode::OK
    }
}

async fn models() -> Json<Value> {
    Json(json!({"models": [
        {"id": "mock-causal", "modes": ["causal"], "context_window": 64},
        {"id": "mock-masked", "modes": ["masked"], "context_window": 64}
    ]}))
}

async fn logprobs(
    State(s): State<Arc<MockState>>,
    Json(req): Json<Value>,
) -> (StatusCode, Json<Value>) {
    s.logprob_calls.fetch_add(1, Ordering::SeqCst);
    let now = s.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    s.peak_in_flight.fetch_max(now, Ordering::SeqCst);
    let delay = s.delay_ms.load(Ordering::SeqCst);
    if delay > 0 {
        tokio::time::sleep(Duration::from_millis(delay as u64)).await;
    }
    let answer = answer(&s, &req);
    s.requests.lock().unwrap().push(req);
    s.in_flight.fetch_sub(1, Ordering::SeqCst);
    answer
}

fn answer(s: &MockState, req: &Value) -> (StatusCode, Json<Value>) {
    let failures = s.failures.load(Ordering::SeqCst);
    if failures > 0 {
        s.failures.store(failures - 1, Ordering::SeqCst);
        return (
            StatusCode::INTERNAL_SERVER_ERROR,
            Json(json!({"error": "transient"})),
        );
    }
    let model = req["model"].as_str().unwrap_or_default();
    let mode = req["mode"].as_str().unwrap_or_default();
    let allowed = match model {
        "mock-causal" | "mock-badcount" => "causal",
        "mock-masked" => "masked",
        _ => {
            return (
                StatusCode::NOT_FOUND,
                Json(json!({"error": format!("unknown model {model}")})),
            )
        }
    };
    if mode != allowed {
        return (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(json!({"error": format!("{model} does not serve {mode}")})),
        );
    }
    let target = req["target"].as_str().unwrap_or_default();
    let tokens: Vec<&str> = target.split_whitespace().collect();
    if tokens.is_empty() {
        return (
            StatusCode::BAD_REQUEST,
            Json(json!({"error": "empty target"})),
        );
    }
    let logprobs: Vec<f64> = (0..tokens.len()).map(mock_logprob).collect();
    let count = if model == "mock-badcount" {
        tokens.len() + 1
    } else {
        tokens.len()
    };
    (
        StatusCode::OK,
        Json(json!({"tokens": tokens, "logprobs": logprobs, "token_count": count})),
    )
}

impl MockSidecar {
    /// Serves on an ephemeral port from a background runtime that lives for
    /// the rest of the test process.
    pub fn start(state: MockState) -> MockSidecar {
        let state = Arc::new(state);
        let app = Router::new()
            .route("/healthz", get(healthz))
            .route("/v1/models", get(models))
            .route("/v1/logprobs", post(logprobs))
            .with_state(state.clone());
        let (tx, rx) = std::sync::mpsc::channel::<SocketAddr>();
        std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                tx.send(listener.local_addr().unwrap()).unwrap();
                axum::serve(listener, app).await.unwrap();
            });
        });
        let addr = rx.recv().unwrap();
        MockSidecar {
            url: format!("http://{addr}"),
            state,
        }
    }
}
