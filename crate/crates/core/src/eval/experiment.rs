//! Multi-seed few-shot runs: split, fit on the shots, evaluate on the rest.
//!
//! Scoring does not depend on the split, so claims are scored once and every
//! seed reuses the same scores.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{LmBackend, ScoringMode};
use crate::classify::{fit_threshold, MajorClassBaseline, Objective, Search};
use crate::data::{ClaimRecord, Dataset};
use crate::error::{Error, Result};
use crate::eval::metrics::{evaluate, EvalReport};
use crate::eval::split::make_split;
use crate::scoring::{score_dataset, ScoreOptions, ScoredClaim};

pub const DEFAULT_SEEDS: [u64; 3] = [13, 42, 2020];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub seeds: Vec<u64>,
    pub objective: Objective,
    pub search: Search,
    pub stratified: bool,
}

impl ExperimentConfig {
    pub fn new(n: usize) -> Self {
        ExperimentConfig {
            n,
            seeds: DEFAULT_SEEDS.to_vec(),
            objective: Objective::F1Macro,
            search: Search::Exact,
            stratified: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    /// Fitted threshold; absent for the majority baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub th: Option<f64>,
    pub test_size: usize,
    pub report: EvalReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; absent with a single seed.
    pub std: Option<f64>,
}

impl Summary {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.len() > 1)
            .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Summary { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub dataset: String,
    pub model: String,
    pub method: String,
    pub config: ExperimentConfig,
    pub accuracy: Summary,
    pub f1_macro: Summary,
    pub per_seed: Vec<SeedResult>,
}

/// One flat table row per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub dataset: String,
    pub model: String,
    pub method: String,
    pub n: usize,
    pub seeds: String,
    pub acc_mean: f64,
    pub acc_std: Option<f64>,
    pub f1_mean: f64,
    pub f1_std: Option<f64>,
}

impl AggregateReport {
    fn from_seeds(
        dataset: &str,
        model: &str,
        method: &str,
        config: &ExperimentConfig,
        per_seed: Vec<SeedResult>,
    ) -> Self {
        let acc: Vec<f64> = per_seed.iter().map(|s| s.report.accuracy).collect();
        let f1: Vec<f64> = per_seed.iter().map(|s| s.report.f1_macro).collect();
        AggregateReport {
            dataset: dataset.to_string(),
            model: model.to_string(),
            method: method.to_string(),
            config: config.clone(),
            accuracy: Summary::of(&acc),
            f1_macro: Summary::of(&f1),
            per_seed,
        }
    }

    pub fn row(&self) -> TableRow {
        TableRow {
            dataset: self.dataset.clone(),
            model: self.model.clone(),
            method: self.method.clone(),
            n: self.config.n,
            seeds: self
                .config
                .seeds
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(" "),
            acc_mean: self.accuracy.mean,
            acc_std: self.accuracy.std,
            f1_mean: self.f1_macro.mean,
            f1_std: self.f1_macro.std,
        }
    }
}

pub fn write_rows_csv<W: std::io::Write>(out: W, rows: &[TableRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::validation(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

fn check_config(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.seeds.is_empty() {
        return Err(Error::validation("at least one seed is required"));
    }
    Ok(())
}

/// Runs the threshold classifier over precomputed scores. Every record in
/// `ds` must have a score; a failing seed fails the whole run.
pub fn run_on_scores(
    ds: &Dataset,
    scored: &[ScoredClaim],
    model: &str,
    cfg: &ExperimentConfig,
) -> Result<AggregateReport> {
    check_config(cfg)?;
    let by_id: HashMap<&str, &ScoredClaim> = scored.iter().map(|s| (s.id.as_str(), s)).collect();
    for r in ds.records() {
        match by_id.get(r.id.as_str()) {
            None => return Err(Error::validation(format!("record {} has no score", r.id))),
            Some(s) if s.label != r.label => {
                return Err(Error::validation(format!(
                    "record {} label differs between dataset and scores",
                    r.id
                )))
            }
            _ => {}
        }
    }
    let lookup = |ids: &[String]| -> Vec<ScoredClaim> {
        ids.iter().map(|id| by_id[id.as_str()].clone()).collect()
    };

    let per_seed = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let split = make_split(ds, cfg.n, seed, cfg.stratified)?;
            let shots = lookup(&split.shot_ids);
            let mut clf = fit_threshold(&shots, cfg.objective, cfg.search)?;
            clf.fit_report.seed = Some(seed);
            let pairs = lookup(&split.test_ids)
                .iter()
                .map(|s| Ok((clf.predict(s)?, s.label)))
                .collect::<Result<Vec<_>>>()?;
            let mut report = evaluate(&pairs)?;
            report.seed = Some(seed);
            report.n = Some(cfg.n);
            Ok(SeedResult {
                seed,
                th: Some(clf.th),
                test_size: pairs.len(),
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AggregateReport::from_seeds(
        &ds.name,
        model,
        "perplexity-threshold",
        cfg,
        per_seed,
    ))
}

/// Scores the dataset with `backend` and runs every seed.
pub fn run_experiment<B: LmBackend + ?Sized>(
    ds: &Dataset,
    backend: &B,
    mode: ScoringMode,
    conditioned: bool,
    cfg: &ExperimentConfig,
) -> Result<AggregateReport> {
    check_config(cfg)?;
    let opts = ScoreOptions {
        mode,
        conditioned,
        fail_fast: true,
        ..Default::default()
    };
    let run = score_dataset(backend, ds, &opts)?;
    run_on_scores(ds, &run.scored, &run.provenance.model, cfg)
}

/// Majority-class baseline under the same splits.
pub fn run_major_class(ds: &Dataset, cfg: &ExperimentConfig) -> Result<AggregateReport> {
    check_config(cfg)?;
    let by_id: HashMap<&str, &ClaimRecord> =
        ds.records().iter().map(|r| (r.id.as_str(), r)).collect();
    let per_seed = cfg
        .seeds
        .iter()
        .map(|&seed| {
            let split = make_split(ds, cfg.n, seed, cfg.stratified)?;
            let baseline = MajorClassBaseline::from_labels(
                split.shot_ids.iter().map(|id| by_id[id.as_str()].label),
            )?;
            let pairs: Vec<_> = split
                .test_ids
                .iter()
                .map(|id| (baseline.predict(), by_id[id.as_str()].label))
                .collect();
            let mut report = evaluate(&pairs)?;
            report.seed = Some(seed);
            report.n = Some(cfg.n);
            Ok(SeedResult {
                seed,
                th: None,
                test_size: pairs.len(),
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AggregateReport::from_seeds(
        &ds.name,
        "-",
        "major-class",
        cfg,
        per_seed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::NgramModel;
    use crate::data::VeracityLabel;

    fn tiny() -> (Dataset, NgramModel) {
        let model = NgramModel::train(["the cat sat on the mat", "the dog sat on the log"], 2, 0.1)
            .unwrap();
        let recs = vec![
            ClaimRecord::new("a", "the cat sat", "the dog", VeracityLabel::Supported),
            ClaimRecord::new(
                "b",
                "zebra quantum fjord",
                "the dog",
                VeracityLabel::Unsupported,
            ),
            ClaimRecord::new("c", "the dog sat on the mat", "", VeracityLabel::Supported),
            ClaimRecord::new("d", "purple kazoo", "the cat", VeracityLabel::Unsupported),
            ClaimRecord::new("e", "on the log", "the dog sat", VeracityLabel::Supported),
        ];
        (Dataset::new("tiny", recs).unwrap(), model)
    }

    #[test]
    fn single_seed_aggregate_equals_seed() {
        let (ds, m) = tiny();
        let cfg = ExperimentConfig {
            seeds: vec![7],
            ..ExperimentConfig::new(2)
        };
        let agg = run_experiment(&ds, &m, ScoringMode::Causal, true, &cfg).unwrap();
        assert_eq!(agg.per_seed.len(), 1);
        assert_eq!(agg.accuracy.mean, agg.per_seed[0].report.accuracy);
        assert_eq!(agg.f1_macro.mean, agg.per_seed[0].report.f1_macro);
        assert_eq!(agg.accuracy.std, None);
        assert_eq!(agg.per_seed[0].test_size, 3);
    }

    #[test]
    fn degenerate_two_shot_runs() {
        let (ds, m) = tiny();
        // find a seed whose two shots share a class
        let seed = (0..1000u64)
            .find(|&s| {
                let sp = make_split(&ds, 2, s, false).unwrap();
                let l: Vec<_> = sp
                    .shot_ids
                    .iter()
                    .map(|id| ds.get(id).unwrap().label)
                    .collect();
                l[0] == l[1]
            })
            .unwrap();
        let cfg = ExperimentConfig {
            seeds: vec![seed],
            ..ExperimentConfig::new(2)
        };
        let agg = run_experiment(&ds, &m, ScoringMode::Causal, true, &cfg).unwrap();
        assert_eq!(agg.per_seed[0].report.confusion.total(), 3);
    }

    #[test]
    fn deterministic_aggregate() {
        let (ds, m) = tiny();
        let cfg = ExperimentConfig::new(2);
        let a = run_experiment(&ds, &m, ScoringMode::Causal, true, &cfg).unwrap();
        let b = run_experiment(&ds, &m, ScoringMode::Causal, true, &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(
            a.per_seed.iter().map(|s| s.seed).collect::<Vec<_>>(),
            DEFAULT_SEEDS
        );
    }

    #[test]
    fn missing_score_and_empty_seeds_rejected() {
        let (ds, m) = tiny();
        let run = score_dataset(&m, &ds, &ScoreOptions::default()).unwrap();
        let partial = &run.scored[1..];
        assert!(run_on_scores(&ds, partial, "m", &ExperimentConfig::new(2)).is_err());
        let cfg = ExperimentConfig {
            seeds: vec![],
            ..ExperimentConfig::new(2)
        };
        assert!(run_on_scores(&ds, &run.scored, "m", &cfg).is_err());
    }

    #[test]
    fn sample_std() {
        let s = Summary::of(&[0.5, 0.7, 0.9]);
        assert!((s.mean - 0.7).abs() < 1e-12);
        assert!((s.std.unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn major_class_baseline_run() {
        let (ds, _) = tiny();
        let agg = run_major_class(&ds, &ExperimentConfig::new(3)).unwrap();
        assert_eq!(agg.per_seed.len(), 3);
        for s in &agg.per_seed {
            let c = s.report.confusion;
            // one predicted column is always empty
            assert!(
                c.supported_as_supported + c.unsupported_as_supported == 0
                    || c.supported_as_unsupported + c.unsupported_as_unsupported == 0
            );
        }
    }

    #[test]
    fn csv_rows() {
        let (ds, m) = tiny();
        let agg = run_experiment(
            &ds,
            &m,
            ScoringMode::Causal,
            true,
            &ExperimentConfig::new(2),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_rows_csv(&mut buf, &[agg.row()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("dataset,model,method,n,seeds,acc_mean,acc_std,f1_mean,f1_std\n"));
        assert!(text.contains("tiny,sha256:"));
    }
}
