//! Few-shot evaluation protocol, metrics, ranking and negation stress tests.

pub mod experiment;
pub mod metrics;
pub mod negation;
pub mod ranking;
pub mod split;

pub use experiment::{
    run_experiment, run_major_class, run_on_scores, AggregateReport, ExperimentConfig,
};
pub use metrics::{evaluate, EvalReport};
pub use negation::{negate_claim, negate_dataset, ppl_gap_report, Negator};
pub use ranking::{rank_claims, RankingReport};
pub use split::{make_split, FewShotSplit};
