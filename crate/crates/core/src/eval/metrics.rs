//! Accuracy, per-class precision/recall/F1 and macro-F1 for the binary task.
//!
//! Any ratio with a zero denominator is reported as 0.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::VeracityLabel;
use crate::error::{Error, Result};

/// 2×2 counts indexed by (gold, predicted).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub supported_as_supported: usize,
    pub supported_as_unsupported: usize,
    pub unsupported_as_supported: usize,
    pub unsupported_as_unsupported: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Confusion {
    pub fn add(&mut self, predicted: VeracityLabel, gold: VeracityLabel) {
        use VeracityLabel::*;
        match (gold, predicted) {
            (Supported, Supported) => self.supported_as_supported += 1,
            (Supported, Unsupported) => self.supported_as_unsupported += 1,
            (Unsupported, Supported) => self.unsupported_as_supported += 1,
            (Unsupported, Unsupported) => self.unsupported_as_unsupported += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.supported_as_supported
            + self.supported_as_unsupported
            + self.unsupported_as_supported
            + self.unsupported_as_unsupported
    }

    pub fn correct(&self) -> usize {
        self.supported_as_supported + self.unsupported_as_unsupported
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.correct(), self.total())
    }

    /// (true positives, false positives, false negatives) treating `label` as positive.
    fn outcomes(&self, label: VeracityLabel) -> (usize, usize, usize) {
        match label {
            VeracityLabel::Supported => (
                self.supported_as_supported,
                self.unsupported_as_supported,
                self.supported_as_unsupported,
            ),
            VeracityLabel::Unsupported => (
                self.unsupported_as_unsupported,
                self.supported_as_unsupported,
                self.unsupported_as_supported,
            ),
        }
    }

    pub fn class_stats(&self, label: VeracityLabel) -> ClassStats {
        let (tp, fp, fn_) = self.outcomes(label);
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassStats {
            precision,
            recall,
            f1,
        }
    }

    pub fn f1_macro(&self) -> f64 {
        VeracityLabel::ALL
            .iter()
            .map(|&l| self.class_stats(l).f1)
            .sum::<f64>()
            / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub f1_macro: f64,
    pub per_class: BTreeMap<VeracityLabel, ClassStats>,
    pub confusion: Confusion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

impl EvalReport {
    pub fn from_confusion(confusion: Confusion) -> Self {
        EvalReport {
            accuracy: confusion.accuracy(),
            f1_macro: confusion.f1_macro(),
            per_class: VeracityLabel::ALL
                .iter()
                .map(|&l| (l, confusion.class_stats(l)))
                .collect(),
            confusion,
            seed: None,
            n: None,
        }
    }
}

/// Scores `(predicted, gold)` pairs.
pub fn evaluate(pairs: &[(VeracityLabel, VeracityLabel)]) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::validation(
            "cannot evaluate an empty prediction list",
        ));
    }
    let mut c = Confusion::default();
    for &(pred, gold) in pairs {
        c.add(pred, gold);
    }
    Ok(EvalReport::from_confusion(c))
}
