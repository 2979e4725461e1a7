//! Few-shot claim verification with evidence-conditioned perplexity.
//!
//! A claim is scored by the perplexity a language model assigns to it when
//! the evidence is given as a prefix. A single threshold fit on a handful of
//! labeled claims then separates supported claims (low perplexity) from
//! unsupported ones.
//!
//! * [`data`]: claim records, datasets and label mappings.
//! * [`backend`]: token log-probability providers (n-gram, remote sidecar).
//! * [`scoring`]: perplexity and scores files.
//! * [`classify`]: threshold classifier and majority baseline.
//! * [`eval`]: few-shot protocol, metrics, ranking and negation.

pub mod backend;
pub mod classify;
pub mod convert;
pub mod data;
pub mod error;
pub mod eval;
pub mod manifest;
pub mod rng;
pub mod scoring;

pub use error::{BackendError, Error, Result};
