//! Conversion of raw source folders into the canonical dataset layout.

mod filters;
mod pipeline;
mod split;
mod synonyms;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use filters::{
    filter_aspect_ratio, filter_foreground, split_multicomponent_gt, DropReason, Verdict,
};
pub use pipeline::{
    ingest_dataset, DropRecord, IngestReport, SourceInfo, EXCLUDE_FILE, LABEL_DIR, SOURCE_INFO_FILE,
};
pub use split::{assign_splits, split_counts, SplitCounts};
pub use synonyms::SynonymTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    /// Images with `max(h, w) / min(h, w)` above this are dropped.
    pub max_aspect_ratio: f64,
    /// Masks covering less than this fraction of the image are dropped.
    pub min_foreground_fraction: f64,
    pub train_fraction: f64,
    /// Largest test split per dataset; the overflow goes back to train.
    pub test_cap: usize,
    pub seed: u64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            max_aspect_ratio: 1.5,
            min_foreground_fraction: 0.001,
            train_fraction: 0.9,
            test_cap: 3000,
            seed: 0,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train fraction {} must lie strictly between 0 and 1",
                self.train_fraction
            )));
        }
        if !(self.max_aspect_ratio > 0.0 && self.min_foreground_fraction > 0.0) {
            return Err(Error::InvalidArgument(
                "filter thresholds must be positive".into(),
            ));
        }
        Ok(())
    }
}
