//! Single-threshold perplexity classifier and the majority-class baseline.
//!
//! A claim whose perplexity is strictly below `th` is Supported; anything at
//! or above it is Unsupported.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{ClaimRecord, VeracityLabel};
use crate::error::{Error, Result};
use crate::eval::metrics::Confusion;
use crate::scoring::ScoredClaim;

const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    F1Macro,
    Accuracy,
}

impl Objective {
    fn value(self, c: &Confusion) -> f64 {
        match self {
            Objective::F1Macro => c.f1_macro(),
            Objective::Accuracy => c.accuracy(),
        }
    }

    fn secondary(self) -> Objective {
        match self {
            Objective::F1Macro => Objective::Accuracy,
            Objective::Accuracy => Objective::F1Macro,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::F1Macro => "f1_macro",
            Objective::Accuracy => "accuracy",
        })
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "f1_macro" | "f1" => Ok(Objective::F1Macro),
            "accuracy" | "acc" => Ok(Objective::Accuracy),
            _ => Err(Error::validation(format!("unknown objective {s:?}"))),
        }
    }
}

/// How candidate thresholds are enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Search {
    /// Midpoints between consecutive distinct shot scores plus one sentinel
    /// below the minimum and one above the maximum.
    Exact,
    /// `lo, lo + step, …, hi`.
    Grid { lo: f64, hi: f64, step: f64 },
}

impl Search {
    /// The 0..=1000 integer grid.
    pub const UNIT_GRID: Search = Search::Grid {
        lo: 0.0,
        hi: 1000.0,
        step: 1.0,
    };
}

impl fmt::Display for Search {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Search::Exact => f.write_str("exact"),
            Search::Grid { lo, hi, step } => write!(f, "grid:{lo}:{hi}:{step}"),
        }
    }
}

impl FromStr for Search {
    type Err = Error;

    /// `exact`, `unit` (0..=1000 in steps of 1), or `grid:LO:HI:STEP`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::validation(format!(
                "invalid search {s:?}; expected exact, unit or grid:LO:HI:STEP"
            ))
        };
        match s {
            "exact" => return Ok(Search::Exact),
            "unit" => return Ok(Search::UNIT_GRID),
            _ => {}
        }
        let rest = s.strip_prefix("grid:").ok_or_else(bad)?;
        let parts: Vec<f64> = rest
            .split(':')
            .map(|p| p.parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        match parts[..] {
            [lo, hi, step] => Ok(Search::Grid { lo, hi, step }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub objective_value: f64,
    pub secondary_value: f64,
    pub shots: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdClassifier {
    pub th: f64,
    pub objective: Objective,
    pub search: Search,
    pub fit_report: FitReport,
    pub provenance_hash: String,
}

impl ThresholdClassifier {
    pub fn decide(&self, perplexity: f64) -> VeracityLabel {
        if perplexity < self.th {
            VeracityLabel::Supported
        } else {
            VeracityLabel::Unsupported
        }
    }

    pub fn predict(&self, scored: &ScoredClaim) -> Result<VeracityLabel> {
        predict(self, scored)
    }
}

/// Applies the decision rule after checking the claim lives in the score
/// space the threshold was fit in.
pub fn predict(clf: &ThresholdClassifier, scored: &ScoredClaim) -> Result<VeracityLabel> {
    if scored.provenance_hash != clf.provenance_hash {
        return Err(Error::validation(format!(
            "claim {} was scored under {} but the threshold was fit under {}",
            scored.id, scored.provenance_hash, clf.provenance_hash
        )));
    }
    Ok(clf.decide(scored.perplexity))
}

fn sentinel_eps(v: f64) -> f64 {
    1e-6 * v.abs().max(1.0)
}

/// Scores sorted ascending with per-value label counts.
struct SortedShots {
    values: Vec<f64>,
    /// (supported, unsupported) at each distinct value.
    counts: Vec<(usize, usize)>,
    total: (usize, usize),
}

impl SortedShots {
    fn new(shots: &[ScoredClaim]) -> Self {
        let mut pairs: Vec<(f64, VeracityLabel)> =
            shots.iter().map(|s| (s.perplexity, s.label)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut values: Vec<f64> = Vec::new();
        let mut counts: Vec<(usize, usize)> = Vec::new();
        let mut total = (0, 0);
        for (v, l) in pairs {
            if values.last() != Some(&v) {
                values.push(v);
                counts.push((0, 0));
            }
            let slot = counts.last_mut().expect("pushed above");
            match l {
                VeracityLabel::Supported => {
                    slot.0 += 1;
                    total.0 += 1;
                }
                VeracityLabel::Unsupported => {
                    slot.1 += 1;
                    total.1 += 1;
                }
            }
        }
        SortedShots {
            values,
            counts,
            total,
        }
    }

    /// Confusion when scores below `values[j]` (the first `j` distinct
    /// values) are predicted Supported, given prefix label counts.
    fn confusion(&self, prefix: (usize, usize)) -> Confusion {
        Confusion {
            supported_as_supported: prefix.0,
            supported_as_unsupported: self.total.0 - prefix.0,
            unsupported_as_supported: prefix.1,
            unsupported_as_unsupported: self.total.1 - prefix.1,
        }
    }

    /// Threshold for "first `j` distinct values are Supported".
    fn threshold_for(&self, j: usize) -> f64 {
        let m = self.values.len();
        if j == 0 {
            let v = self.values[0];
            let t = v - sentinel_eps(v);
            if t > 0.0 || v <= 0.0 {
                t
            } else {
                v / 2.0
            }
        } else if j == m {
            let v = self.values[m - 1];
            v + sentinel_eps(v)
        } else {
            let (a, b) = (self.values[j - 1], self.values[j]);
            let mid = a + (b - a) / 2.0;
            if a < mid && mid <= b {
                mid
            } else {
                b
            }
        }
    }
}

struct Best {
    th: f64,
    primary: f64,
    secondary: f64,
}

impl Best {
    fn consider(slot: &mut Option<Best>, th: f64, primary: f64, secondary: f64) {
        let better = match slot {
            None => true,
            Some(b) => {
                if (primary - b.primary).abs() > TIE_TOLERANCE {
                    primary > b.primary
                } else if (secondary - b.secondary).abs() > TIE_TOLERANCE {
                    secondary > b.secondary
                } else {
                    th < b.th
                }
            }
        };
        if better {
            *slot = Some(Best {
                th,
                primary,
                secondary,
            });
        }
    }
}

/// Fits `th` on scored shots.
///
/// Ties on the objective go to the higher secondary metric (accuracy for
/// macro-F1 and vice versa), then to the smaller threshold.
pub fn fit_threshold(
    shots: &[ScoredClaim],
    objective: Objective,
    search: Search,
) -> Result<ThresholdClassifier> {
    let first = shots
        .first()
        .ok_or_else(|| Error::validation("cannot fit a threshold on an empty shot set"))?;
    if let Some(other) = shots
        .iter()
        .find(|s| s.provenance_hash != first.provenance_hash)
    {
        return Err(Error::validation(format!(
            "shots mix score spaces: {} has {}, {} has {}",
            first.id, first.provenance_hash, other.id, other.provenance_hash
        )));
    }
    let sorted = SortedShots::new(shots);
    let secondary = objective.secondary();
    let mut best: Option<Best> = None;

    match search {
        Search::Exact => {
            let mut prefix = (0, 0);
            for j in 0..=sorted.values.len() {
                if j > 0 {
                    prefix.0 += sorted.counts[j - 1].0;
                    prefix.1 += sorted.counts[j - 1].1;
                }
                let c = sorted.confusion(prefix);
                Best::consider(
                    &mut best,
                    sorted.threshold_for(j),
                    objective.value(&c),
                    secondary.value(&c),
                );
            }
        }
        Search::Grid { lo, hi, step } => {
            if !(step > 0.0 && lo.is_finite() && hi.is_finite() && hi >= lo) {
                return Err(Error::validation(format!(
                    "grid search needs finite lo <= hi and step > 0, got {search}"
                )));
            }
            // cumulative label counts for values[..j]
            let mut cum = vec![(0usize, 0usize)];
            for &(s, u) in &sorted.counts {
                let last = *cum.last().unwrap();
                cum.push((last.0 + s, last.1 + u));
            }
            let steps = ((hi - lo) / step + 1e-9).floor() as usize;
            for i in 0..=steps {
                let th = lo + i as f64 * step;
                let j = sorted.values.partition_point(|&v| v < th);
                let c = sorted.confusion(cum[j]);
                Best::consider(&mut best, th, objective.value(&c), secondary.value(&c));
            }
        }
    }

    let best = best.expect("at least one candidate is always evaluated");
    Ok(ThresholdClassifier {
        th: best.th,
        objective,
        search,
        fit_report: FitReport {
            objective_value: best.primary,
            secondary_value: best.secondary,
            shots: shots.len(),
            seed: None,
        },
        provenance_hash: first.provenance_hash.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajorClassBaseline {
    pub majority: VeracityLabel,
}

impl MajorClassBaseline {
    pub fn predict(&self) -> VeracityLabel {
        self.majority
    }

    /// Ties go to Unsupported.
    pub fn from_labels(labels: impl IntoIterator<Item = VeracityLabel>) -> Result<Self> {
        let (mut s, mut u) = (0usize, 0usize);
        for l in labels {
            match l {
                VeracityLabel::Supported => s += 1,
                VeracityLabel::Unsupported => u += 1,
            }
        }
        if s + u == 0 {
            return Err(Error::validation(
                "cannot fit the majority baseline on an empty shot set",
            ));
        }
        let majority = if s > u {
            VeracityLabel::Supported
        } else {
            VeracityLabel::Unsupported
        };
        Ok(MajorClassBaseline { majority })
    }
}

pub fn fit_major_class(shots: &[ClaimRecord]) -> Result<MajorClassBaseline> {
    MajorClassBaseline::from_labels(shots.iter().map(|r| r.label))
}
