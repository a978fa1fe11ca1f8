use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::AnatomyGroup;

/// Final Dice of one simulated or live segmentation of one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub dataset: String,
    pub image_id: String,
    pub category: String,
    pub modality: String,
    /// `None` when the category is not in the catalog.
    pub anatomy: Option<AnatomyGroup>,
    pub strategy: String,
    pub dice: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    #[default]
    All,
    Modality,
    Anatomy,
    Strategy,
    Category,
    Dataset,
}

impl GroupBy {
    pub const ALL: [GroupBy; 6] = [
        GroupBy::All,
        GroupBy::Modality,
        GroupBy::Anatomy,
        GroupBy::Strategy,
        GroupBy::Category,
        GroupBy::Dataset,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GroupBy::All => "all",
            GroupBy::Modality => "modality",
            GroupBy::Anatomy => "anatomy",
            GroupBy::Strategy => "strategy",
            GroupBy::Category => "category",
            GroupBy::Dataset => "dataset",
        }
    }

    fn key(self, r: &EvalRecord) -> String {
        match self {
            GroupBy::All => "all".into(),
            GroupBy::Modality => r.modality.clone(),
            GroupBy::Anatomy => r.anatomy.map_or("unassigned", AnatomyGroup::as_str).into(),
            GroupBy::Strategy => r.strategy.clone(),
            GroupBy::Category => r.category.clone(),
            GroupBy::Dataset => r.dataset.clone(),
        }
    }
}

impl fmt::Display for GroupBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GroupBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GroupBy::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown grouping {s:?}")))
    }
}

/// Partial sums for one group. Merging is associative and commutative, so
/// groups can be reduced in any order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupSums {
    pub dice_sum: f64,
    pub masks: usize,
    /// Keyed by (dataset, image id).
    pub per_image: BTreeMap<(String, String), (f64, usize)>,
}

impl GroupSums {
    pub fn add(&mut self, r: &EvalRecord) {
        self.dice_sum += r.dice;
        self.masks += 1;
        let e = self
            .per_image
            .entry((r.dataset.clone(), r.image_id.clone()))
            .or_default();
        e.0 += r.dice;
        e.1 += 1;
    }

    pub fn merge(&mut self, other: GroupSums) {
        self.dice_sum += other.dice_sum;
        self.masks += other.masks;
        for (k, (s, n)) in other.per_image {
            let e = self.per_image.entry(k).or_default();
            e.0 += s;
            e.1 += n;
        }
    }

    fn score(&self, key: String) -> GroupScore {
        let image_means: f64 = self.per_image.values().map(|(s, n)| s / *n as f64).sum();
        GroupScore {
            key,
            mean_dice_image_level: image_means / self.per_image.len() as f64,
            mean_dice_mask_level: self.dice_sum / self.masks as f64,
            images: self.per_image.len(),
            masks: self.masks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub key: String,
    /// Mean over images of the per-image mean Dice.
    pub mean_dice_image_level: f64,
    /// Mean over all records.
    pub mean_dice_mask_level: f64,
    pub images: usize,
    pub masks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub group_by: GroupBy,
    /// Sorted by key. Groups without records do not appear.
    pub groups: Vec<GroupScore>,
}

impl AggregateReport {
    pub fn to_text(&self) -> String {
        let width = self
            .groups
            .iter()
            .map(|g| g.key.len())
            .chain([self.group_by.as_str().len()])
            .max()
            .unwrap_or(0);
        let mut s = format!(
            "{:<width$}  {:>8}  {:>8}  {:>7}  {:>7}\n",
            self.group_by.as_str(),
            "image",
            "mask",
            "images",
            "masks"
        );
        for g in &self.groups {
            let _ = writeln!(
                s,
                "{:<width$}  {:>8.4}  {:>8.4}  {:>7}  {:>7}",
                g.key, g.mean_dice_image_level, g.mean_dice_mask_level, g.images, g.masks
            );
        }
        s
    }
}

pub fn group_sums(records: &[EvalRecord], group_by: GroupBy) -> BTreeMap<String, GroupSums> {
    let mut groups: BTreeMap<String, GroupSums> = BTreeMap::new();
    for r in records {
        groups.entry(group_by.key(r)).or_default().add(r);
    }
    groups
}

/// Image-level and mask-level mean Dice per group.
pub fn aggregate(records: &[EvalRecord], group_by: GroupBy) -> AggregateReport {
    report_from_sums(group_by, group_sums(records, group_by))
}

pub fn report_from_sums(group_by: GroupBy, sums: BTreeMap<String, GroupSums>) -> AggregateReport {
    AggregateReport {
        group_by,
        groups: sums
            .into_iter()
            .filter(|(_, s)| s.masks > 0)
            .map(|(k, s)| s.score(k))
            .collect(),
    }
}
