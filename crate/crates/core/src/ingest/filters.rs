use serde::{Deserialize, Serialize};

use crate::maskcore::{connected_components, foreground_fraction, BinaryMask, LabeledMask};

use super::IngestConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    AspectRatio,
    ForegroundTooSmall,
    UnresolvedCategory,
    Excluded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    Drop(DropReason),
}

impl Verdict {
    pub fn is_keep(self) -> bool {
        self == Verdict::Keep
    }
}

/// Drops images whose long side exceeds the short side by more than the
/// configured ratio.
pub fn filter_aspect_ratio(height: usize, width: usize, cfg: &IngestConfig) -> Verdict {
    let (lo, hi) = (height.min(width) as f64, height.max(width) as f64);
    if hi / lo > cfg.max_aspect_ratio {
        Verdict::Drop(DropReason::AspectRatio)
    } else {
        Verdict::Keep
    }
}

pub fn filter_foreground(mask: &BinaryMask, cfg: &IngestConfig) -> Verdict {
    if foreground_fraction(mask) < cfg.min_foreground_fraction {
        Verdict::Drop(DropReason::ForegroundTooSmall)
    } else {
        Verdict::Keep
    }
}

/// One mask per connected component for separable categories, numbered by
/// `instance`; anything else is returned unchanged.
pub fn split_multicomponent_gt(lm: LabeledMask, separable: bool) -> Vec<LabeledMask> {
    if !separable {
        return vec![lm];
    }
    let parts = connected_components(&lm.mask);
    if parts.len() < 2 {
        return vec![lm];
    }
    parts
        .into_iter()
        .enumerate()
        .map(|(i, mask)| LabeledMask {
            mask,
            instance: Some(i as u32),
            ..lm.clone()
        })
        .collect()
}
