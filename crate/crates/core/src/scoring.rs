//! Evidence-conditioned perplexity.
//!
//! With evidence as context, only the claim tokens contribute:
//! `PPL = exp(-(1/C) · Σ_i log p(claim_i | evidence, claim_<i))`, which is the
//! C-th root of the product of inverse token probabilities computed in log
//! space. Masked (pseudo-likelihood) scores are normalized the same way.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{LmBackend, ScoringMode, TokenLogProbs};
use crate::data::{ClaimRecord, Dataset, VeracityLabel};
use crate::error::{BackendError, Error, Result};

pub const NORMALIZATION: &str = "exp(-mean token log-probability)";
const FORMAT: &str = "ppl-verify-scores";
const FORMAT_VERSION: u32 = 1;

/// Everything that determines which score space a perplexity lives in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub backend: String,
    pub model: String,
    pub mode: ScoringMode,
    pub conditioned: bool,
    pub tokenizer_note: String,
    pub normalization: String,
}

impl Provenance {
    pub fn new<B: LmBackend + ?Sized>(backend: &B, mode: ScoringMode, conditioned: bool) -> Self {
        let d = backend.descriptor();
        Provenance {
            backend: d.backend,
            model: d.model,
            mode,
            conditioned,
            tokenizer_note: d.tokenizer_note,
            normalization: NORMALIZATION.to_string(),
        }
    }

    /// `sha256:<hex>` over the canonical JSON of the fields above.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("provenance serializes");
        format!(
            "sha256:{}",
            hex::encode(Sha256::digest(canonical.as_bytes()))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredClaim {
    pub id: String,
    pub label: VeracityLabel,
    pub mode: ScoringMode,
    pub conditioned: bool,
    /// Conditioning was requested but the record had no evidence, so the claim
    /// was scored without context.
    pub evidence_missing: bool,
    pub perplexity: f64,
    /// Number of claim tokens.
    pub claim_tokens: usize,
    pub token_logprobs: Option<TokenLogProbs>,
    pub provenance_hash: String,
}

/// `exp(-(Σ logprobs) / token_count)`.
pub fn perplexity_from_logprobs(lp: &TokenLogProbs) -> Result<f64> {
    if lp.token_count == 0 || lp.logprobs.is_empty() {
        return Err(BackendError::EmptyTarget.into());
    }
    Ok((-lp.sum() / lp.token_count as f64).exp())
}

fn score_with_hash<B: LmBackend + ?Sized>(
    backend: &B,
    record: &ClaimRecord,
    mode: ScoringMode,
    conditioned: bool,
    provenance_hash: &str,
) -> Result<ScoredClaim> {
    let annotate = |e: Error| Error::Record {
        id: record.id.clone(),
        source: Box::new(e),
    };
    if record.claim.trim().is_empty() {
        return Err(annotate(BackendError::EmptyTarget.into()));
    }
    let evidence_missing = conditioned && record.evidence.trim().is_empty();
    let context = if conditioned {
        record.evidence.as_str()
    } else {
        ""
    };
    let lp = match mode {
        ScoringMode::Causal => crate::backend::score_causal(backend, context, &record.claim),
        ScoringMode::Masked => crate::backend::score_masked(backend, context, &record.claim),
    }
    .map_err(|e| annotate(e.into()))?;
    let perplexity = perplexity_from_logprobs(&lp).map_err(annotate)?;
    Ok(ScoredClaim {
        id: record.id.clone(),
        label: record.label,
        mode,
        conditioned,
        evidence_missing,
        perplexity,
        claim_tokens: lp.token_count,
        token_logprobs: Some(lp),
        provenance_hash: provenance_hash.to_string(),
    })
}

/// Scores one claim. With `conditioned`, the evidence is the context;
/// without it the claim is scored alone.
pub fn score_claim<B: LmBackend + ?Sized>(
    backend: &B,
    record: &ClaimRecord,
    mode: ScoringMode,
    conditioned: bool,
) -> Result<ScoredClaim> {
    let hash = Provenance::new(backend, mode, conditioned).hash();
    score_with_hash(backend, record, mode, conditioned, &hash)
}

#[derive(Debug, Clone)]
pub struct ScoreOptions {
    pub mode: ScoringMode,
    pub conditioned: bool,
    /// Worker threads; 1 scores sequentially.
    pub jobs: usize,
    pub fail_fast: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            mode: ScoringMode::Causal,
            conditioned: true,
            jobs: 1,
            fail_fast: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordError {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRun {
    pub provenance: Provenance,
    pub scored: Vec<ScoredClaim>,
    pub errors: Vec<RecordError>,
}

impl ScoreRun {
    pub fn provenance_hash(&self) -> String {
        self.provenance.hash()
    }
}

/// Scores every record, keeping dataset order. Failures become error entries
/// unless `fail_fast` is set, in which case the first failure in dataset order
/// is returned.
pub fn score_dataset<B: LmBackend + ?Sized>(
    backend: &B,
    ds: &Dataset,
    opts: &ScoreOptions,
) -> Result<ScoreRun> {
    let provenance = Provenance::new(backend, opts.mode, opts.conditioned);
    if !backend.supports(opts.mode) {
        return Err(BackendError::UnsupportedMode {
            backend: provenance.backend,
            mode: opts.mode,
        }
        .into());
    }
    let hash = provenance.hash();
    let one = |r: &ClaimRecord| score_with_hash(backend, r, opts.mode, opts.conditioned, &hash);

    let results: Vec<Result<ScoredClaim>> = if opts.jobs <= 1 {
        ds.records().iter().map(one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::validation(format!("cannot start {} workers: {e}", opts.jobs)))?;
        pool.install(|| ds.records().par_iter().map(one).collect())
    };

    let mut scored = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for res in results {
        match res {
            Ok(s) => scored.push(s),
            Err(e) if opts.fail_fast => return Err(e),
            // A capability mismatch applies to every record; report it once.
            Err(Error::Record { source, .. })
                if matches!(
                    *source,
                    Error::Backend(BackendError::UnsupportedMode { .. })
                ) =>
            {
                return Err(*source)
            }
            Err(Error::Record { id, source }) => errors.push(RecordError {
                id,
                error: source.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(ScoreRun {
        provenance,
        scored,
        errors,
    })
}

// ---------------------------------------------------------------------------
// Scores file
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoresHeader {
    pub format: String,
    pub version: u32,
    #[serde(flatten)]
    pub provenance: Provenance,
    pub dataset: String,
    pub dataset_hash: String,
    pub created_at: String,
    pub provenance_hash: String,
}

impl ScoresHeader {
    pub fn new(provenance: Provenance, ds: &Dataset, created_at: impl Into<String>) -> Self {
        let provenance_hash = provenance.hash();
        ScoresHeader {
            format: FORMAT.to_string(),
            version: FORMAT_VERSION,
            provenance,
            dataset: ds.name.clone(),
            dataset_hash: crate::data::dataset_hash(ds),
            created_at: created_at.into(),
            provenance_hash,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: ScoresHeader,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    id: String,
    label: VeracityLabel,
    perplexity: f64,
    #[serde(rename = "C")]
    claim_tokens: usize,
    mode: ScoringMode,
    conditioned: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    evidence_missing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    logprobs: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum BodyLine {
    Error(RecordError),
    Record(RecordLine),
}

/// A parsed scores file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoresFile {
    pub header: ScoresHeader,
    pub scored: Vec<ScoredClaim>,
    pub errors: Vec<RecordError>,
}

pub fn write_scores<W: Write>(
    mut out: W,
    header: &ScoresHeader,
    scored: &[ScoredClaim],
    errors: &[RecordError],
    include_logprobs: bool,
) -> std::io::Result<()> {
    serde_json::to_writer(
        &mut out,
        &HeaderLine {
            header: header.clone(),
        },
    )?;
    out.write_all(b"\n")?;
    for s in scored {
        let (tokens, logprobs) = match (&s.token_logprobs, include_logprobs) {
            (Some(lp), true) => (Some(lp.tokens.clone()), Some(lp.logprobs.clone())),
            _ => (None, None),
        };
        let line = RecordLine {
            id: s.id.clone(),
            label: s.label,
            perplexity: s.perplexity,
            claim_tokens: s.claim_tokens,
            mode: s.mode,
            conditioned: s.conditioned,
            evidence_missing: s.evidence_missing,
            tokens,
            logprobs,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    for e in errors {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_scores<R: BufRead>(origin: &str, reader: R) -> Result<ScoresFile> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            None => return Err(parse_err(1, "missing header line".into())),
            Some((_, Err(e))) => return Err(Error::io(origin, e)),
            Some((_, Ok(l))) if l.trim().is_empty() => continue,
            Some((i, Ok(l))) => {
                let h: HeaderLine =
                    serde_json::from_str(&l).map_err(|e| parse_err(i + 1, e.to_string()))?;
                break h.header;
            }
        }
    };
    if header.format != FORMAT || header.version != FORMAT_VERSION {
        return Err(Error::validation(format!(
            "{origin}: not a version-{FORMAT_VERSION} scores file ({} v{})",
            header.format, header.version
        )));
    }
    if header.provenance.hash() != header.provenance_hash {
        return Err(Error::validation(format!(
            "{origin}: provenance hash does not match header fields"
        )));
    }

    let mut scored = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<BodyLine>(&line)
            .map_err(|e| parse_err(i + 1, e.to_string()))?
        {
            BodyLine::Error(e) => errors.push(e),
            BodyLine::Record(r) => {
                if r.mode != header.provenance.mode
                    || r.conditioned != header.provenance.conditioned
                {
                    return Err(parse_err(
                        i + 1,
                        "record mode/conditioning differs from header".into(),
                    ));
                }
                if !(r.perplexity > 0.0 && r.perplexity.is_finite()) || r.claim_tokens == 0 {
                    return Err(parse_err(
                        i + 1,
                        "perplexity must be positive and C >= 1".into(),
                    ));
                }
                let token_logprobs = match (r.tokens, r.logprobs) {
                    (Some(t), Some(l)) => Some(
                        TokenLogProbs::new(t, l).map_err(|e| parse_err(i + 1, e.to_string()))?,
                    ),
                    (None, None) => None,
                    _ => {
                        return Err(parse_err(
                            i + 1,
                            "tokens and logprobs must appear together".into(),
                        ))
                    }
                };
                scored.push(ScoredClaim {
                    id: r.id,
                    label: r.label,
                    mode: r.mode,
                    conditioned: r.conditioned,
                    evidence_missing: r.evidence_missing,
                    perplexity: r.perplexity,
                    claim_tokens: r.claim_tokens,
                    token_logprobs,
                    provenance_hash: header.provenance_hash.clone(),
                });
            }
        }
    }
    Ok(ScoresFile {
        header,
        scored,
        errors,
    })
}

pub fn load_scores(path: impl AsRef<Path>) -> Result<ScoresFile> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_scores(&path.display().to_string(), BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::NgramModel;
    use proptest::prelude::*;

    fn lp(values: &[f64]) -> TokenLogProbs {
        TokenLogProbs::new(
            values.iter().map(|_| "t".to_string()).collect(),
            values.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn perplexity_examples() {
        assert!(
            (perplexity_from_logprobs(&lp(&[0.25f64.ln(), 0.25f64.ln()])).unwrap() - 4.0).abs()
                < 1e-12
        );
        assert_eq!(perplexity_from_logprobs(&lp(&[0.0])).unwrap(), 1.0);
        // (1/0.5 · 1/0.125)^(1/2) = 16^(1/2)
        assert!(
            (perplexity_from_logprobs(&lp(&[0.5f64.ln(), 0.125f64.ln()])).unwrap() - 4.0).abs()
                < 1e-12
        );
    }

    #[test]
    fn perplexity_rejects_empty() {
        let empty = TokenLogProbs {
            tokens: vec![],
            logprobs: vec![],
            token_count: 0,
        };
        assert!(perplexity_from_logprobs(&empty).is_err());
    }

    #[test]
    fn conditioned_bigram_claim() {
        let m = NgramModel::train(["a b a b"], 2, 1.0).unwrap();
        let rec = ClaimRecord::new("r", "b", "a", VeracityLabel::Supported);
        let s = score_claim(&m, &rec, ScoringMode::Causal, true).unwrap();
        assert!((s.perplexity - 1.0 / 0.6).abs() < 1e-12);
        assert_eq!(s.claim_tokens, 1);
        assert!(!s.evidence_missing);
    }

    #[test]
    fn empty_evidence_is_flagged_not_rejected() {
        let m = NgramModel::train(["a b a b"], 2, 1.0).unwrap();
        let rec = ClaimRecord::new("r", "a b", " ", VeracityLabel::Supported);
        let cond = score_claim(&m, &rec, ScoringMode::Causal, true).unwrap();
        let plain = score_claim(&m, &rec, ScoringMode::Causal, false).unwrap();
        assert!(cond.evidence_missing);
        assert_eq!(cond.perplexity, plain.perplexity);
        assert_ne!(cond.provenance_hash, plain.provenance_hash);
    }

    #[test]
    fn errors_carry_record_id() {
        let m = NgramModel::train(["a"], 2, 1.0).unwrap();
        let rec = ClaimRecord::new("r9", "a", "", VeracityLabel::Supported);
        let err = score_claim(&m, &rec, ScoringMode::Masked, false).unwrap_err();
        assert!(err.to_string().starts_with("record r9:"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    fn three_records(bad_second: bool) -> Dataset {
        let mut recs = vec![
            ClaimRecord::new("r1", "a b", "a", VeracityLabel::Supported),
            ClaimRecord::new("r2", "b a", "", VeracityLabel::Unsupported),
            ClaimRecord::new("r3", "x y", "b", VeracityLabel::Unsupported),
        ];
        if bad_second {
            recs[1].claim = "   ".into();
        }
        Dataset::from_records_unchecked("t", recs)
    }

    #[test]
    fn dataset_order_kept() {
        let m = NgramModel::train(["a b a b"], 2, 1.0).unwrap();
        for jobs in [1, 4] {
            let opts = ScoreOptions {
                jobs,
                ..Default::default()
            };
            let run = score_dataset(&m, &three_records(false), &opts).unwrap();
            let ids: Vec<_> = run.scored.iter().map(|s| s.id.as_str()).collect();
            assert_eq!(ids, ["r1", "r2", "r3"]);
            assert!(run.errors.is_empty());
        }
    }

    #[test]
    fn failures_are_routed_to_error_entries() {
        let m = NgramModel::train(["a b a b"], 2, 1.0).unwrap();
        let run = score_dataset(&m, &three_records(true), &ScoreOptions::default()).unwrap();
        assert_eq!(run.scored.len(), 2);
        assert_eq!(run.errors.len(), 1);
        assert_eq!(run.errors[0].id, "r2");

        let opts = ScoreOptions {
            fail_fast: true,
            ..Default::default()
        };
        assert!(matches!(
            score_dataset(&m, &three_records(true), &opts),
            Err(Error::Record { ref id, .. }) if id == "r2"
        ));
    }

    #[test]
    fn unsupported_mode_fails_whole_run() {
        let m = NgramModel::train(["a b"], 2, 1.0).unwrap();
        let opts = ScoreOptions {
            mode: ScoringMode::Masked,
            ..Default::default()
        };
        let err = score_dataset(&m, &three_records(false), &opts).unwrap_err();
        assert!(matches!(
            err,
            Error::Backend(BackendError::UnsupportedMode { .. })
        ));
    }

    fn render(run: &ScoreRun, ds: &Dataset, logprobs: bool) -> Vec<u8> {
        let header = ScoresHeader::new(run.provenance.clone(), ds, "1970-01-01T00:00:00Z");
        let mut buf = Vec::new();
        write_scores(&mut buf, &header, &run.scored, &run.errors, logprobs).unwrap();
        buf
    }

    #[test]
    fn scores_file_is_deterministic_and_round_trips() {
        let ds = three_records(true);
        let m = NgramModel::train(["a b a b", "b b a"], 3, 0.5).unwrap();
        let a = render(
            &score_dataset(&m, &ds, &ScoreOptions::default()).unwrap(),
            &ds,
            true,
        );
        let b = render(
            &score_dataset(&m, &ds, &ScoreOptions::default()).unwrap(),
            &ds,
            true,
        );
        assert_eq!(a, b);

        let run = score_dataset(&m, &ds, &ScoreOptions::default()).unwrap();
        let parsed = read_scores("mem", &a[..]).unwrap();
        assert_eq!(parsed.scored, run.scored);
        assert_eq!(parsed.errors, run.errors);
        assert_eq!(parsed.header.provenance, run.provenance);

        let slim = read_scores("mem", &render(&run, &ds, false)[..]).unwrap();
        assert!(slim.scored.iter().all(|s| s.token_logprobs.is_none()));
        assert_eq!(slim.scored[0].perplexity, run.scored[0].perplexity);
    }

    #[test]
    fn tampered_header_rejected() {
        let ds = three_records(false);
        let m = NgramModel::train(["a b"], 2, 1.0).unwrap();
        let text = String::from_utf8(render(
            &score_dataset(&m, &ds, &ScoreOptions::default()).unwrap(),
            &ds,
            false,
        ))
        .unwrap();
        let tampered = text.replacen("\"conditioned\":true", "\"conditioned\":false", 1);
        assert!(matches!(
            read_scores("mem", tampered.as_bytes()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn uniform_model_perplexity_is_vocab_size() {
        for v in [2usize, 4, 100] {
            let declared: Vec<String> = (1..v).map(|i| format!("w{i}")).collect();
            let m = NgramModel::train_with_vocab(Vec::<&str>::new(), &declared, 3, 1.0).unwrap();
            assert_eq!(m.vocab_size(), v);
            for len in 1..6 {
                let claim = declared
                    .iter()
                    .cycle()
                    .take(len)
                    .cloned()
                    .collect::<Vec<_>>()
                    .join(" ");
                let rec = ClaimRecord::new("r", claim, "w1", VeracityLabel::Supported);
                let s = score_claim(&m, &rec, ScoringMode::Causal, true).unwrap();
                assert!(
                    (s.perplexity - v as f64).abs() < 1e-9,
                    "V={v} len={len}: {}",
                    s.perplexity
                );
            }
        }
    }

    proptest! {
        #[test]
        fn perplexity_matches_definition(values in prop::collection::vec(-20.0f64..0.0, 1..40)) {
            let p = perplexity_from_logprobs(&lp(&values)).unwrap();
            let expected = (-values.iter().sum::<f64>() / values.len() as f64).exp();
            prop_assert!((p - expected).abs() <= 1e-9 * expected.max(1.0));
            prop_assert!(p > 0.0);
        }
    }
}
