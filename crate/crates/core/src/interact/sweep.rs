use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskcore::{ImageGrid, LabeledMask};
use crate::proposer::Segmenter;
use crate::seed;

use super::prompts::ClickPlacement;
use super::session::{run_session, InitialPrompt, Strategy};

pub const DEFAULT_MAX_INTERACTIONS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Dice after 1..=max interactions of one long session per target.
    InteractionCount,
    /// One initial click, uniform versus centroid placement.
    ClickPosition,
    /// One initial box at each jitter level.
    BboxOffset,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::InteractionCount => "interaction_count",
            Protocol::ClickPosition => "click_position",
            Protocol::BboxOffset => "bbox_offset",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Protocol::InteractionCount,
            Protocol::ClickPosition,
            Protocol::BboxOffset,
        ]
        .into_iter()
        .find(|p| p.as_str() == s.replace('-', "_"))
        .ok_or_else(|| Error::InvalidArgument(format!("unknown protocol {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Initial prompt and placement for the interaction-count protocol.
    pub base: Strategy,
    pub max_interactions: usize,
    pub jitters: Vec<usize>,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            base: Strategy::default(),
            max_interactions: DEFAULT_MAX_INTERACTIONS,
            jitters: vec![0, 5, 10],
            seed: 0,
        }
    }
}

/// One image and the targets to segment in it.
#[derive(Debug, Clone)]
pub struct SweepImage {
    pub id: String,
    pub image: ImageGrid,
    pub targets: Vec<LabeledMask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub name: String,
    pub mean_dice_image_level: f64,
    pub mean_dice_mask_level: f64,
    pub n: usize,
}

/// Per-target outcome of one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub arm: String,
    pub image_id: String,
    pub target_index: usize,
    pub category_id: u32,
    pub dice: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub protocol: Protocol,
    pub arms: Vec<Arm>,
    #[serde(skip)]
    pub records: Vec<SweepRecord>,
}

fn arm_names(protocol: Protocol, cfg: &SweepConfig) -> Vec<String> {
    match protocol {
        Protocol::InteractionCount => (1..=cfg.max_interactions)
            .map(|k| format!("K={k}"))
            .collect(),
        Protocol::ClickPosition => vec!["uniform".into(), "centroid".into()],
        Protocol::BboxOffset => cfg.jitters.iter().map(|j| format!("jitter={j}")).collect(),
    }
}

/// Dice per arm for one target. Every arm of a target shares one seed.
fn target_dice(
    image: &ImageGrid,
    target: &LabeledMask,
    segmenter: &dyn Segmenter,
    protocol: Protocol,
    cfg: &SweepConfig,
    session_seed: u64,
) -> Result<Vec<f64>> {
    match protocol {
        Protocol::InteractionCount => {
            let strategy = Strategy {
                rounds: cfg.max_interactions,
                ..cfg.base
            };
            Ok(run_session(image, target, segmenter, &strategy, session_seed)?.dice_trace)
        }
        Protocol::ClickPosition => [ClickPlacement::Uniform, ClickPlacement::Centroid]
            .into_iter()
            .map(|placement| {
                let strategy = Strategy {
                    initial: InitialPrompt::Click,
                    rounds: 1,
                    placement,
                    ..cfg.base
                };
                Ok(run_session(image, target, segmenter, &strategy, session_seed)?.dice_trace[0])
            })
            .collect(),
        Protocol::BboxOffset => cfg
            .jitters
            .iter()
            .map(|&jitter| {
                let strategy = Strategy {
                    initial: InitialPrompt::Box,
                    rounds: 1,
                    jitter,
                    ..cfg.base
                };
                Ok(run_session(image, target, segmenter, &strategy, session_seed)?.dice_trace[0])
            })
            .collect(),
    }
}

/// Runs a robustness protocol over every target and reports mean Dice per
/// arm, both over all targets and as the mean of per-image means.
///
/// The session seed of a target is derived from `(cfg.seed, image id,
/// target index)`, so arms are paired and results do not depend on
/// scheduling.
pub fn robustness_sweep(
    images: &[SweepImage],
    segmenter: &dyn Segmenter,
    protocol: Protocol,
    cfg: &SweepConfig,
) -> Result<SweepReport> {
    let jobs: Vec<(&SweepImage, usize)> = images
        .iter()
        .flat_map(|img| (0..img.targets.len()).map(move |t| (img, t)))
        .collect();
    if jobs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if protocol == Protocol::InteractionCount && cfg.max_interactions == 0 {
        return Err(Error::InvalidArgument(
            "max_interactions must be at least 1".into(),
        ));
    }
    let names = arm_names(protocol, cfg);
    let per_target: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(img, t)| {
            let s = seed::derive(cfg.seed, &[seed::hash_str(&img.id), t as u64]);
            target_dice(&img.image, &img.targets[t], segmenter, protocol, cfg, s)
        })
        .collect::<Result<_>>()?;

    let mut records = Vec::with_capacity(jobs.len() * names.len());
    let mut arms = Vec::with_capacity(names.len());
    for (a, name) in names.iter().enumerate() {
        let mut by_image: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
        let mut total = 0.0;
        for (&(img, t), dices) in jobs.iter().zip(&per_target) {
            let d = dices[a];
            total += d;
            let e = by_image.entry(img.id.as_str()).or_default();
            e.0 += d;
            e.1 += 1;
            records.push(SweepRecord {
                arm: name.clone(),
                image_id: img.id.clone(),
                target_index: t,
                category_id: img.targets[t].category_id,
                dice: d,
            });
        }
        let image_level =
            by_image.values().map(|(s, n)| s / *n as f64).sum::<f64>() / by_image.len() as f64;
        arms.push(Arm {
            name: name.clone(),
            mean_dice_image_level: image_level,
            mean_dice_mask_level: total / jobs.len() as f64,
            n: jobs.len(),
        });
    }
    Ok(SweepReport {
        protocol,
        arms,
        records,
    })
}
