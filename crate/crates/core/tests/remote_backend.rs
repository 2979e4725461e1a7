mod common;

use std::sync::atomic::Ordering;
use std::time::Duration;

use common::{mock_logprob, MockSidecar, MockState};
use ppl_verify::backend::{LmBackend, RemoteBackend, RemoteConfig, ScoringMode};
use ppl_verify::data::{ClaimRecord, Dataset, VeracityLabel};
use ppl_verify::scoring::{score_claim, score_dataset, ScoreOptions};
use ppl_verify::{BackendError, Error};

fn client(url: &str, model: &str) -> RemoteBackend {
    let mut cfg = RemoteConfig::new(url, model);
    cfg.backoff = Duration::from_millis(1);
    RemoteBackend::new(cfg)
}

#[test]
fn causal_scores_follow_the_wire_protocol() {
    let mock = MockSidecar::start(MockState::default());
    let backend = client(&mock.url, "mock-causal");
    let lp = backend
        .score(
            ScoringMode::Causal,
            "Washing hands.",
            "hands prevent disease",
        )
        .unwrap();
    assert_eq!(lp.tokens, ["hands", "prevent", "disease"]);
    assert_eq!(lp.token_count, 3);
    assert_eq!(
        lp.logprobs,
        [mock_logprob(0), mock_logprob(1), mock_logprob(2)]
    );

    let req = mock.state.requests.lock().unwrap()[0].clone();
    assert_eq!(req["model"], "mock-causal");
    assert_eq!(req["mode"], "causal");
    assert_eq!(req["context"], "Washing hands.");
    assert_eq!(req["target"], "hands prevent disease");
}

#[test]
fn claim_perplexity_uses_evidence_as_context() {
    let mock = MockSidecar::start(MockState::default());
    let backend = client(&mock.url, "mock-causal");
    let rec = ClaimRecord::new("r1", "a b", "some evidence", VeracityLabel::Supported);
    let s = score_claim(&backend, &rec, ScoringMode::Causal, true).unwrap();
    let expected = (-(mock_logprob(0) + mock_logprob(1)) / 2.0).exp();
    assert!((s.perplexity - expected).abs() < 1e-12);
    let u = score_claim(&backend, &rec, ScoringMode::Causal, false).unwrap();
    let reqs = mock.state.requests.lock().unwrap();
    assert_eq!(reqs[0]["context"], "some evidence");
    assert_eq!(reqs[1]["context"], "");
    assert_ne!(s.provenance_hash, u.provenance_hash);
}

#[test]
fn masked_single_token_shape() {
    let mock = MockSidecar::start(MockState::default());
    let backend = client(&mock.url, "mock-masked");
    let lp = backend.score(ScoringMode::Masked, "", "t").unwrap();
    assert_eq!(lp.token_count, 1);
    assert!(lp.logprobs[0] <= 0.0);
}

#[test]
fn unsupported_mode_is_final() {
    let mock = MockSidecar::start(MockState::default());
    let backend = client(&mock.url, "mock-causal");
    let err = backend.score(ScoringMode::Masked, "", "x").unwrap_err();
    assert!(
        matches!(
            err,
            BackendError::UnsupportedMode {
                mode: ScoringMode::Masked,
                ..
            }
        ),
        "{err:?}"
    );
    assert_eq!(mock.state.logprob_calls.load(Ordering::SeqCst), 1);
    assert_eq!(Error::from(err).exit_code(), 2);
}

#[test]
fn unknown_model_is_rejected() {
    let mock = MockSidecar::start(MockState::default());
    let err = client(&mock.url, "nope")
        .score(ScoringMode::Causal, "", "x")
        .unwrap_err();
    assert!(
        matches!(err, BackendError::Rejected { status: 404, .. }),
        "{err:?}"
    );
}

#[test]
fn transient_server_errors_are_retried() {
    let state = MockState::default();
    state.failures.store(2, Ordering::SeqCst);
    let mock = MockSidecar::start(state);
    let lp = client(&mock.url, "mock-causal")
        .score(ScoringMode::Causal, "", "x y")
        .unwrap();
    assert_eq!(lp.token_count, 2);
    assert_eq!(mock.state.logprob_calls.load(Ordering::SeqCst), 3);
}

#[test]
fn persistent_server_errors_exhaust_retries() {
    let state = MockState::default();
    state.failures.store(100, Ordering::SeqCst);
    let mock = MockSidecar::start(state);
    let mut cfg = RemoteConfig::new(&mock.url, "mock-causal");
    cfg.max_retries = 2;
    cfg.backoff = Duration::from_millis(1);
    let err = RemoteBackend::new(cfg)
        .score(ScoringMode::Causal, "", "x")
        .unwrap_err();
    match &err {
        BackendError::Unavailable {
            attempts,
            retry_after,
            ..
        } => {
            assert_eq!(*attempts, 3);
            assert!(*retry_after > Duration::ZERO);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(Error::from(err).exit_code(), 4);
}

#[test]
fn token_count_mismatch_is_a_protocol_error() {
    let mock = MockSidecar::start(MockState::default());
    let err = client(&mock.url, "mock-badcount")
        .score(ScoringMode::Causal, "", "x")
        .unwrap_err();
    assert!(matches!(err, BackendError::Protocol(_)), "{err:?}");
}

#[test]
fn health_and_models() {
    let state = MockState::default();
    state.unhealthy_checks.store(2, Ordering::SeqCst);
    let mock = MockSidecar::start(state);
    let backend = client(&mock.url, "mock-causal");
    assert!(!backend.health().unwrap());
    backend.wait_ready().unwrap();
    assert!(backend.health().unwrap());

    let models = backend.models().unwrap();
    assert_eq!(models.len(), 2);
    assert_eq!(models[0].id, "mock-causal");
    assert_eq!(models[0].modes, [ScoringMode::Causal]);
    assert_eq!(models[0].context_window, Some(64));
}

#[test]
fn concurrent_scoring_respects_in_flight_bound() {
    let state = MockState::default();
    state.delay_ms.store(20, Ordering::SeqCst);
    let mock = MockSidecar::start(state);
    let mut cfg = RemoteConfig::new(&mock.url, "mock-causal");
    cfg.max_in_flight = 2;
    let backend = RemoteBackend::new(cfg);

    let records: Vec<_> = (0..12)
        .map(|i| {
            ClaimRecord::new(
                format!("r{i:02}"),
                format!("claim {i}"),
                "ev",
                VeracityLabel::Supported,
            )
        })
        .collect();
    let ds = Dataset::new("remote", records).unwrap();
    let opts = ScoreOptions {
        jobs: 6,
        ..ScoreOptions::default()
    };
    let run = score_dataset(&backend, &ds, &opts).unwrap();
    let ids: Vec<_> = run.scored.iter().map(|s| s.id.as_str()).collect();
    let expected: Vec<_> = ds.records().iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, expected);
    assert!(mock.state.peak_in_flight.load(Ordering::SeqCst) <= 2);
    assert_eq!(run.provenance.backend, "remote");
}

#[test]
fn unsupported_mode_aborts_the_whole_run() {
    let mock = MockSidecar::start(MockState::default());
    let backend = client(&mock.url, "mock-causal");
    let records: Vec<_> = (0..3)
        .map(|i| ClaimRecord::new(format!("r{i}"), "x", "", VeracityLabel::Supported))
        .collect();
    let ds = Dataset::new("d", records).unwrap();
    let opts = ScoreOptions {
        mode: ScoringMode::Masked,
        ..ScoreOptions::default()
    };
    let err = score_dataset(&backend, &ds, &opts).unwrap_err();
    assert!(
        matches!(err, Error::Backend(BackendError::UnsupportedMode { .. })),
        "{err:?}"
    );
}
