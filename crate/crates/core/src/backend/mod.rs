//! Token log-probability providers.
//!
//! A backend scores a target text given a context text and returns one natural
//! log-probability per target token. Context tokens condition the target but
//! never appear in the output.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{BackendError, Error};

pub mod ngram;
pub mod remote;

pub use ngram::NgramModel;
pub use remote::{RemoteBackend, RemoteConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoringMode {
    /// Left-to-right: each target token given everything before it.
    Causal,
    /// Pseudo-likelihood: each target token with only its own position masked.
    Masked,
}

impl ScoringMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoringMode::Causal => "causal",
            ScoringMode::Masked => "masked",
        }
    }
}

impl fmt::Display for ScoringMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoringMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "causal" => Ok(ScoringMode::Causal),
            "masked" => Ok(ScoringMode::Masked),
            _ => Err(Error::validation(format!("unknown scoring mode {s:?}"))),
        }
    }
}

/// Per-token log-probabilities of the target region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProbs {
    pub tokens: Vec<String>,
    pub logprobs: Vec<f64>,
    pub token_count: usize,
}

impl TokenLogProbs {
    /// Checks the length and sign contract.
    pub fn new(tokens: Vec<String>, logprobs: Vec<f64>) -> Result<Self, BackendError> {
        if tokens.len() != logprobs.len() {
            return Err(BackendError::Protocol(format!(
                "{} tokens but {} logprobs",
                tokens.len(),
                logprobs.len()
            )));
        }
        if tokens.is_empty() {
            return Err(BackendError::EmptyTarget);
        }
        if let Some(bad) = logprobs.iter().find(|lp| lp.is_nan() || **lp > 0.0) {
            return Err(BackendError::Protocol(format!(
                "log-probability {bad} is not <= 0"
            )));
        }
        let token_count = tokens.len();
        Ok(TokenLogProbs {
            tokens,
            logprobs,
            token_count,
        })
    }

    pub fn sum(&self) -> f64 {
        self.logprobs.iter().sum()
    }
}

/// Identifies the score space a backend produces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    /// Backend kind, e.g. `ngram` or `remote`.
    pub backend: String,
    /// Model identity: a content hash for n-gram files, the served id for remote models.
    pub model: String,
    /// How context and target are joined and tokenized.
    pub tokenizer_note: String,
}

pub trait LmBackend: Send + Sync {
    fn descriptor(&self) -> BackendDescriptor;

    fn supports(&self, mode: ScoringMode) -> bool;

    /// Scores `target` given `context` in the requested mode.
    fn score(
        &self,
        mode: ScoringMode,
        context: &str,
        target: &str,
    ) -> Result<TokenLogProbs, BackendError>;
}

impl<B: LmBackend + ?Sized> LmBackend for &B {
    fn descriptor(&self) -> BackendDescriptor {
        (**self).descriptor()
    }
    fn supports(&self, mode: ScoringMode) -> bool {
        (**self).supports(mode)
    }
    fn score(
        &self,
        mode: ScoringMode,
        context: &str,
        target: &str,
    ) -> Result<TokenLogProbs, BackendError> {
        (**self).score(mode, context, target)
    }
}

impl<B: LmBackend + ?Sized> LmBackend for Box<B> {
    fn descriptor(&self) -> BackendDescriptor {
        (**self).descriptor()
    }
    fn supports(&self, mode: ScoringMode) -> bool {
        (**self).supports(mode)
    }
    fn score(
        &self,
        mode: ScoringMode,
        context: &str,
        target: &str,
    ) -> Result<TokenLogProbs, BackendError> {
        (**self).score(mode, context, target)
    }
}

fn checked_score<B: LmBackend + ?Sized>(
    backend: &B,
    mode: ScoringMode,
    context: &str,
    target: &str,
) -> Result<TokenLogProbs, BackendError> {
    if !backend.supports(mode) {
        return Err(BackendError::UnsupportedMode {
            backend: backend.descriptor().backend,
            mode,
        });
    }
    if target.trim().is_empty() {
        return Err(BackendError::EmptyTarget);
    }
    backend.score(mode, context, target)
}

/// `log p(target_i | context ++ target_<i)` for every target token.
pub fn score_causal<B: LmBackend + ?Sized>(
    backend: &B,
    context: &str,
    target: &str,
) -> Result<TokenLogProbs, BackendError> {
    checked_score(backend, ScoringMode::Causal, context, target)
}

/// `log p(target_i | sequence with position i masked)`; context is never masked.
pub fn score_masked<B: LmBackend + ?Sized>(
    backend: &B,
    context: &str,
    target: &str,
) -> Result<TokenLogProbs, BackendError> {
    checked_score(backend, ScoringMode::Masked, context, target)
}

/// Lower-cased whitespace tokenization used by the n-gram backend.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}
