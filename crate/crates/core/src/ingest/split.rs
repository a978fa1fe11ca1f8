use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::storage::{Manifest, Split};

use super::IngestConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
    /// Images that would have been test but exceeded the cap; included in `train`.
    pub overflow: usize,
}

/// Train gets `floor(train_fraction * n)`, test the rest up to `test_cap`,
/// and anything beyond the cap returns to train.
pub fn split_counts(n: usize, train_fraction: f64, test_cap: usize) -> SplitCounts {
    // The epsilon keeps products like 0.9 * 10 from flooring to 8.
    let base_train = ((train_fraction * n as f64) + 1e-9).floor() as usize;
    let base_train = base_train.min(n);
    let wanted_test = n - base_train;
    let test = wanted_test.min(test_cap);
    let overflow = wanted_test - test;
    SplitCounts {
        train: base_train + overflow,
        test,
        overflow,
    }
}

/// Tags every image of the manifest. Images are ordered by id, shuffled with
/// a stream derived from the seed and the dataset name, and the first
/// `test` of the shuffled order become the test split.
pub fn assign_splits(manifest: &mut Manifest, cfg: &IngestConfig) -> SplitCounts {
    let counts = split_counts(manifest.images.len(), cfg.train_fraction, cfg.test_cap);
    let mut order: Vec<usize> = (0..manifest.images.len()).collect();
    order.sort_by(|&a, &b| manifest.images[a].id.cmp(&manifest.images[b].id));
    order.shuffle(&mut seed::rng(cfg.seed, &[seed::hash_str(&manifest.name)]));
    for (rank, &idx) in order.iter().enumerate() {
        manifest.images[idx].split = if rank < counts.test {
            Split::Test
        } else {
            Split::Train
        };
    }
    counts
}
