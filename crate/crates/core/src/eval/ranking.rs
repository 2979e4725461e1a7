//! Triage ranking: claims sorted by descending perplexity, scored by the
//! fraction of Unsupported claims in the top k, against a random-score baseline.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data::VeracityLabel;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scoring::ScoredClaim;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub ks: Vec<usize>,
    pub precision_at_k: Vec<f64>,
    /// Mean over `trials` random-score rankings.
    pub baseline_precision_at_k: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl RankingReport {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::validation(format!("csv: {e}"));
        w.write_record(["k", "precision_at_k", "baseline_precision_at_k"])
            .map_err(csv_err)?;
        for i in 0..self.ks.len() {
            w.write_record([
                self.ks[i].to_string(),
                self.precision_at_k[i].to_string(),
                self.baseline_precision_at_k[i].to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }
}

fn by_score_desc_then_id(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Claims in descending perplexity; equal perplexities by ascending id.
pub fn rank_order(scored: &[ScoredClaim]) -> Vec<&ScoredClaim> {
    let mut v: Vec<&ScoredClaim> = scored.iter().collect();
    v.sort_by(|a, b| by_score_desc_then_id((a.perplexity, &a.id), (b.perplexity, &b.id)));
    v
}

/// P@k for every k given labels in ranked order.
fn precision_curve(ranked: impl Iterator<Item = VeracityLabel>, ks: &[usize]) -> Vec<f64> {
    let mut hits_at = Vec::new();
    let mut hits = 0usize;
    for l in ranked {
        if l == VeracityLabel::Unsupported {
            hits += 1;
        }
        hits_at.push(hits);
    }
    ks.iter()
        .map(|&k| hits_at[k - 1] as f64 / k as f64)
        .collect()
}

pub fn rank_claims(
    scored: &[ScoredClaim],
    ks: &[usize],
    baseline_trials: usize,
    seed: u64,
) -> Result<RankingReport> {
    if ks.is_empty() {
        return Err(Error::validation("at least one k is required"));
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > scored.len()) {
        return Err(Error::validation(format!(
            "k = {k} is outside 1..={}",
            scored.len()
        )));
    }
    if baseline_trials == 0 {
        return Err(Error::validation("baseline needs at least one trial"));
    }

    let precision_at_k = precision_curve(rank_order(scored).into_iter().map(|s| s.label), ks);

    let mut rng = SplitMix64::new(seed);
    let mut sums = vec![0.0; ks.len()];
    let mut keyed: Vec<(f64, &str, VeracityLabel)> = Vec::with_capacity(scored.len());
    for _ in 0..baseline_trials {
        keyed.clear();
        keyed.extend(
            scored
                .iter()
                .map(|s| (rng.next_f64(), s.id.as_str(), s.label)),
        );
        keyed.sort_by(|a, b| by_score_desc_then_id((a.0, a.1), (b.0, b.1)));
        for (sum, p) in sums
            .iter_mut()
            .zip(precision_curve(keyed.iter().map(|k| k.2), ks))
        {
            *sum += p;
        }
    }
    let baseline_precision_at_k = sums
        .into_iter()
        .map(|s| s / baseline_trials as f64)
        .collect();

    Ok(RankingReport {
        ks: ks.to_vec(),
        precision_at_k,
        baseline_precision_at_k,
        trials: baseline_trials,
        seed,
    })
}
