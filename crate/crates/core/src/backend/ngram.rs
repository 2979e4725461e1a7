//! Additive-smoothed n-gram language model.
//!
//! `p(t | ctx) = (count(ctx, t) + alpha) / (count(ctx, ·) + alpha · |V|)` where
//! `ctx` is the previous `order - 1` tokens, left-padded with a begin-of-sequence
//! marker. The vocabulary holds every training token plus `<unk>`; the marker
//! only ever appears as context and is never predicted.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{tokenize, BackendDescriptor, LmBackend, ScoringMode, TokenLogProbs};
use crate::error::{BackendError, Error, Result};

pub const UNK: &str = "<unk>";
const BOS: u32 = u32::MAX;
const FORMAT: &str = "ppl-verify-ngram";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: HashMap<u32, u64>,
}

#[derive(Debug, Clone)]
pub struct NgramModel {
    order: usize,
    alpha: f64,
    /// Sorted; the id of a token is its index.
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    unk: u32,
    counts: HashMap<Vec<u32>, ContextCounts>,
    fingerprint: String,
}

#[derive(Serialize, Deserialize)]
struct ContextEntry {
    /// `null` marks the begin-of-sequence pad.
    context: Vec<Option<String>>,
    next: BTreeMap<String, u64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    order: usize,
    alpha: f64,
    vocab: Vec<String>,
    counts: Vec<ContextEntry>,
}

fn validate_params(order: usize, alpha: f64) -> Result<()> {
    if order == 0 {
        return Err(Error::validation("n-gram order must be >= 1"));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::validation(format!(
            "smoothing alpha must be a positive finite number, got {alpha}"
        )));
    }
    Ok(())
}

impl NgramModel {
    /// Trains on lines of text; each line is one BOS-padded sequence.
    pub fn train<I, S>(corpus: I, order: usize, alpha: f64) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self::train_with_vocab(corpus, std::iter::empty::<&str>(), order, alpha)
    }

    /// Like [`NgramModel::train`], with extra vocabulary entries that have no
    /// counts. `<unk>` is always part of the vocabulary.
    pub fn train_with_vocab<I, S, V, T>(
        corpus: I,
        declared: V,
        order: usize,
        alpha: f64,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
        V: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        validate_params(order, alpha)?;
        let sentences: Vec<Vec<String>> =
            corpus.into_iter().map(|l| tokenize(l.as_ref())).collect();

        let mut vocab_set: BTreeSet<String> = declared
            .into_iter()
            .flat_map(|t| tokenize(t.as_ref()))
            .collect();
        vocab_set.extend(sentences.iter().flatten().cloned());
        vocab_set.insert(UNK.to_string());

        let mut model = Self::with_vocab(order, alpha, vocab_set.into_iter().collect());
        for sent in &sentences {
            let ids: Vec<u32> = sent.iter().map(|t| model.id(t)).collect();
            let padded = model.pad(&ids);
            let k = order - 1;
            for pos in k..padded.len() {
                let ctx = padded[pos - k..pos].to_vec();
                let entry = model.counts.entry(ctx).or_default();
                entry.total += 1;
                *entry.next.entry(padded[pos]).or_default() += 1;
            }
        }
        model.fingerprint = model.compute_fingerprint();
        Ok(model)
    }

    fn with_vocab(order: usize, alpha: f64, vocab: Vec<String>) -> Self {
        let index: HashMap<String, u32> = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let unk = index[UNK];
        NgramModel {
            order,
            alpha,
            vocab,
            index,
            unk,
            counts: HashMap::new(),
            fingerprint: String::new(),
        }
    }

    fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(self.unk)
    }

    fn pad(&self, ids: &[u32]) -> Vec<u32> {
        let mut padded = vec![BOS; self.order - 1];
        padded.extend_from_slice(ids);
        padded
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// `sha256:<hex>` of the serialized model; identical models share it.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    fn prob_ids(&self, ctx: &[u32], token: u32) -> f64 {
        let v = self.vocab.len() as f64;
        let (c, n) = match self.counts.get(ctx) {
            Some(cc) => (cc.next.get(&token).copied().unwrap_or(0), cc.total),
            None => (0, 0),
        };
        (c as f64 + self.alpha) / (n as f64 + self.alpha * v)
    }

    /// Conditional probability of `token` after `history` (tokens, oldest
    /// first). Only the last `order - 1` history tokens matter; short
    /// histories are BOS-padded. Unknown strings map to `<unk>`.
    pub fn prob(&self, history: &[&str], token: &str) -> f64 {
        let ids: Vec<u32> = history.iter().map(|t| self.id(t)).collect();
        let padded = self.pad(&ids);
        let ctx = &padded[padded.len() - (self.order - 1)..];
        self.prob_ids(ctx, self.id(token))
    }

    fn score_tokens(&self, context: &[String], target: &[String]) -> Vec<f64> {
        let mut ids: Vec<u32> = context.iter().map(|t| self.id(t)).collect();
        let start = ids.len();
        ids.extend(target.iter().map(|t| self.id(t)));
        let padded = self.pad(&ids);
        let k = self.order - 1;
        (start..ids.len())
            .map(|i| {
                let pos = i + k;
                self.prob_ids(&padded[pos - k..pos], padded[pos]).ln()
            })
            .collect()
    }

    fn to_file(&self) -> ModelFile {
        let name = |id: &u32| (*id != BOS).then(|| self.vocab[*id as usize].clone());
        let mut counts: Vec<ContextEntry> = self
            .counts
            .iter()
            .map(|(ctx, cc)| ContextEntry {
                context: ctx.iter().map(name).collect(),
                next: cc
                    .next
                    .iter()
                    .map(|(t, c)| (self.vocab[*t as usize].clone(), *c))
                    .collect(),
            })
            .collect();
        counts.sort_by(|a, b| a.context.cmp(&b.context));
        ModelFile {
            format: FORMAT.to_string(),
            version: FORMAT_VERSION,
            order: self.order,
            alpha: self.alpha,
            vocab: self.vocab.clone(),
            counts,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("model serializes")
    }

    fn compute_fingerprint(&self) -> String {
        format!(
            "sha256:{}",
            hex::encode(Sha256::digest(self.to_json().as_bytes()))
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bad = |m: String| Error::validation(format!("invalid n-gram model file: {m}"));
        let file: ModelFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if file.format != FORMAT {
            return Err(bad(format!("format tag {:?}", file.format)));
        }
        if file.version != FORMAT_VERSION {
            return Err(bad(format!("unsupported version {}", file.version)));
        }
        validate_params(file.order, file.alpha)?;
        let mut vocab = file.vocab;
        vocab.sort();
        vocab.dedup();
        if vocab.binary_search_by(|t| t.as_str().cmp(UNK)).is_err() {
            return Err(bad("vocabulary lacks <unk>".into()));
        }
        let mut model = Self::with_vocab(file.order, file.alpha, vocab);
        for entry in file.counts {
            if entry.context.len() != model.order - 1 {
                return Err(bad(format!(
                    "context of length {} in order-{} model",
                    entry.context.len(),
                    model.order
                )));
            }
            let lookup = |t: &str| {
                model
                    .index
                    .get(t)
                    .copied()
                    .ok_or_else(|| bad(format!("token {t:?} not in vocabulary")))
            };
            let ctx = entry
                .context
                .iter()
                .map(|t| match t {
                    None => Ok(BOS),
                    Some(t) => lookup(t),
                })
                .collect::<Result<Vec<u32>>>()?;
            let mut cc = ContextCounts::default();
            for (t, c) in &entry.next {
                cc.next.insert(lookup(t)?, *c);
                cc.total += c;
            }
            model.counts.insert(ctx, cc);
        }
        model.fingerprint = model.compute_fingerprint();
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_json().as_bytes())
            .and_then(|_| f.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

impl PartialEq for NgramModel {
    fn eq(&self, other: &Self) -> bool {
        self.fingerprint == other.fingerprint
    }
}

impl LmBackend for NgramModel {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            backend: "ngram".to_string(),
            model: self.fingerprint.clone(),
            tokenizer_note: "lowercase whitespace tokens; context and target tokenized separately and concatenated"
                .to_string(),
        }
    }

    fn supports(&self, mode: ScoringMode) -> bool {
        mode == ScoringMode::Causal
    }

    fn score(
        &self,
        mode: ScoringMode,
        context: &str,
        target: &str,
    ) -> std::result::Result<TokenLogProbs, BackendError> {
        if mode != ScoringMode::Causal {
            return Err(BackendError::UnsupportedMode {
                backend: "ngram".to_string(),
                mode,
            });
        }
        let target_tokens = tokenize(target);
        if target_tokens.is_empty() {
            return Err(BackendError::EmptyTarget);
        }
        let logprobs = self.score_tokens(&tokenize(context), &target_tokens);
        TokenLogProbs::new(target_tokens, logprobs)
    }
}
