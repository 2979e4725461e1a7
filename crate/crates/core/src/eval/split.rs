use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, VeracityLabel};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Shot ids used to fit the threshold and the disjoint remainder used for testing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotSplit {
    pub seed: u64,
    pub n: usize,
    pub shot_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// Shuffles record positions with a SplitMix64-seeded Fisher–Yates pass over
/// dataset order and takes the first `n` as shots.
///
/// With `stratified` and `n >= 2`, a shot set that misses a class present in
/// the dataset has its last shot swapped for the earliest record of that class
/// in the shuffled remainder.
pub fn make_split(ds: &Dataset, n: usize, seed: u64, stratified: bool) -> Result<FewShotSplit> {
    let total = ds.len();
    if n == 0 || n >= total {
        return Err(Error::validation(format!(
            "shot count must satisfy 1 <= n < {total} (dataset size), got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..total).collect();
    SplitMix64::new(seed).shuffle(&mut order);

    if stratified && n >= 2 {
        let recs = ds.records();
        for label in VeracityLabel::ALL {
            if order[..n].iter().any(|&i| recs[i].label == label) {
                continue;
            }
            if let Some(pos) = order[n..].iter().position(|&i| recs[i].label == label) {
                order.swap(n - 1, n + pos);
            }
        }
    }

    let id = |i: &usize| ds.records()[*i].id.clone();
    Ok(FewShotSplit {
        seed,
        n,
        shot_ids: order[..n].iter().map(id).collect(),
        test_ids: order[n..].iter().map(id).collect(),
    })
}

impl FewShotSplit {
    pub fn is_partition_of(&self, ds: &Dataset) -> bool {
        let shots: HashSet<&str> = self.shot_ids.iter().map(String::as_str).collect();
        let tests: HashSet<&str> = self.test_ids.iter().map(String::as_str).collect();
        let all: HashSet<&str> = ds.records().iter().map(|r| r.id.as_str()).collect();
        shots.len() == self.shot_ids.len()
            && tests.len() == self.test_ids.len()
            && shots.is_disjoint(&tests)
            && shots.union(&tests).copied().collect::<HashSet<_>>() == all
    }
}
