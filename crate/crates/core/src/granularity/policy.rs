use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskcore::{foreground_fraction, LabeledMask};

pub const DEFAULT_MIN_FG_RATE: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    /// Drop each interactive mask whose foreground fraction is below the rate.
    #[default]
    PerMask,
    /// Drop the lowest-coverage share (the rate, rounded down) of each
    /// subset's interactive masks.
    Quantile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityPolicy {
    pub min_fg_rate: f64,
    pub mode: PolicyMode,
}

impl Default for QualityPolicy {
    fn default() -> Self {
        Self {
            min_fg_rate: DEFAULT_MIN_FG_RATE,
            mode: PolicyMode::PerMask,
        }
    }
}

/// All masks of one subset (dataset), grouped per image.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetMasks {
    pub name: String,
    pub images: Vec<Vec<LabeledMask>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetOutcome {
    pub name: String,
    pub flagged: bool,
    pub ground_truth: usize,
    pub interactive_before: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QualityReport {
    pub subsets: Vec<SubsetOutcome>,
}

impl QualityReport {
    pub fn total_dropped(&self) -> usize {
        self.subsets.iter().map(|s| s.dropped).sum()
    }
}

fn drop_flags(subset: &SubsetMasks, policy: &QualityPolicy) -> Vec<Vec<bool>> {
    let mut flags: Vec<Vec<bool>> = subset.images.iter().map(|m| vec![false; m.len()]).collect();
    match policy.mode {
        PolicyMode::PerMask => {
            for (img, masks) in subset.images.iter().enumerate() {
                for (i, m) in masks.iter().enumerate() {
                    flags[img][i] =
                        !m.is_ground_truth() && foreground_fraction(&m.mask) < policy.min_fg_rate;
                }
            }
        }
        PolicyMode::Quantile => {
            let mut pool: Vec<(f64, usize, usize)> = subset
                .images
                .iter()
                .enumerate()
                .flat_map(|(img, masks)| {
                    masks
                        .iter()
                        .enumerate()
                        .filter(|(_, m)| !m.is_ground_truth())
                        .map(move |(i, m)| (foreground_fraction(&m.mask), img, i))
                })
                .collect();
            let k = (policy.min_fg_rate * pool.len() as f64).floor() as usize;
            pool.sort_by(|a, b| a.0.total_cmp(&b.0));
            for &(_, img, i) in pool.iter().take(k) {
                flags[img][i] = true;
            }
        }
    }
    flags
}

/// Removes low-coverage interactive masks from the flagged subsets.
/// Ground-truth masks and unflagged subsets are left alone.
pub fn apply_quality_policy(
    subsets: &mut [SubsetMasks],
    flagged: &[String],
    policy: &QualityPolicy,
) -> Result<QualityReport> {
    let known: BTreeSet<&str> = subsets.iter().map(|s| s.name.as_str()).collect();
    if let Some(unknown) = flagged.iter().find(|f| !known.contains(f.as_str())) {
        return Err(Error::UnknownSubset(unknown.clone()));
    }
    let flagged: BTreeSet<&str> = flagged.iter().map(String::as_str).collect();
    let mut report = QualityReport::default();
    for subset in subsets.iter_mut() {
        let is_flagged = flagged.contains(subset.name.as_str());
        let all = subset.images.iter().flatten();
        let ground_truth = all.clone().filter(|m| m.is_ground_truth()).count();
        let interactive_before = all.count() - ground_truth;
        let mut dropped = 0;
        if is_flagged {
            let flags = drop_flags(subset, policy);
            for (masks, flags) in subset.images.iter_mut().zip(flags) {
                let mut it = flags.into_iter();
                masks.retain(|_| !it.next().expect("one flag per mask"));
            }
            let after = subset.images.iter().flatten().count() - ground_truth;
            dropped = interactive_before - after;
        }
        report.subsets.push(SubsetOutcome {
            name: subset.name.clone(),
            flagged: is_flagged,
            ground_truth,
            interactive_before,
            dropped,
        });
    }
    Ok(report)
}
