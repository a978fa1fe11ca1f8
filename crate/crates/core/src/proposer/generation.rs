//! Grid-prompted candidate generation: one positive click per grid cell,
//! then confidence filtering, non-maximum suppression and background
//! removal, in that order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::maskcore::{foreground_fraction, iou, ImageGrid};
use crate::seed;

use super::prompt::{Prompt, PromptSet};
use super::segmenter::{query, CandidateMask, Segmenter};

pub const DEFAULT_GRID: usize = 32;
pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.85;
pub const DEFAULT_NMS_IOU: f64 = 0.7;
pub const DEFAULT_MAX_COVER: f64 = 0.8;

/// `n x n` points at cell centers, row-major:
/// `row_i = floor((i + 0.5) * h / n)`, `col_j = floor((j + 0.5) * w / n)`.
pub fn grid_points(height: usize, width: usize, n: usize) -> Vec<(usize, usize)> {
    let center = |i: usize, len: usize| ((2 * i + 1) * len) / (2 * n);
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (center(i, height), center(j, width))))
        .collect()
}

/// Keeps candidates whose confidence is strictly above `min_confidence`.
pub fn confidence_filter(cands: Vec<CandidateMask>, min_confidence: f64) -> Vec<CandidateMask> {
    cands
        .into_iter()
        .filter(|c| c.confidence > min_confidence)
        .collect()
}

/// Order in which NMS visits candidates: confidence descending, then larger
/// area, then earlier input position.
pub fn nms_order(cands: &[CandidateMask]) -> Vec<usize> {
    let areas: Vec<usize> = cands.iter().map(|c| c.mask.count()).collect();
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| {
        cands[b]
            .confidence
            .total_cmp(&cands[a].confidence)
            .then_with(|| areas[b].cmp(&areas[a]))
            .then_with(|| a.cmp(&b))
    });
    order
}

/// Greedy non-maximum suppression: a candidate survives iff its IoU with
/// every previously kept candidate is at most `iou_threshold`. Output is in
/// visiting order.
pub fn nms(cands: Vec<CandidateMask>, iou_threshold: f64) -> Vec<CandidateMask> {
    let order = nms_order(&cands);
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        let suppressed = kept
            .iter()
            .any(|&k| iou(&cands[i].mask, &cands[k].mask).map_or(true, |v| v > iou_threshold));
        if !suppressed {
            kept.push(i);
        }
    }
    let mut slots: Vec<Option<CandidateMask>> = cands.into_iter().map(Some).collect();
    kept.into_iter()
        .map(|i| slots[i].take().expect("each index kept once"))
        .collect()
}

/// Drops candidates covering strictly more than `max_cover` of the image.
pub fn background_filter(cands: Vec<CandidateMask>, max_cover: f64) -> Vec<CandidateMask> {
    cands
        .into_iter()
        .filter(|c| foreground_fraction(&c.mask) <= max_cover)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub grid: usize,
    pub min_confidence: f64,
    pub nms_iou: f64,
    pub max_cover: f64,
    pub seed: u64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            grid: DEFAULT_GRID,
            min_confidence: DEFAULT_MIN_CONFIDENCE,
            nms_iou: DEFAULT_NMS_IOU,
            max_cover: DEFAULT_MAX_COVER,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointFailure {
    pub row: usize,
    pub col: usize,
    pub message: String,
}

/// Candidate counts after each stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub pooled: usize,
    pub after_confidence: usize,
    pub after_nms: usize,
    pub after_background: usize,
}

#[derive(Debug, Clone)]
pub struct Generation {
    pub masks: Vec<CandidateMask>,
    pub failures: Vec<PointFailure>,
    pub counts: StageCounts,
}

/// Queries the segmenter once per grid point (in parallel) and filters the
/// pooled candidates. The pool is assembled in row-major point order, so the
/// result does not depend on scheduling. A failing point is recorded and
/// skipped.
pub fn generate_interactive_masks(
    image: &ImageGrid,
    segmenter: &dyn Segmenter,
    params: &GenerationParams,
) -> Generation {
    let (h, w) = image.dims();
    let points = grid_points(h, w, params.grid.max(1));
    let answers: Vec<_> = points
        .par_iter()
        .enumerate()
        .map(|(i, &(r, c))| {
            let prompts = PromptSet::single(Prompt::positive(r, c));
            query(
                segmenter,
                image,
                &prompts,
                seed::derive(params.seed, &[i as u64]),
            )
        })
        .collect();

    let mut pooled = Vec::new();
    let mut failures = Vec::new();
    for (&(row, col), answer) in points.iter().zip(answers) {
        match answer {
            Ok(cands) => pooled.extend(cands),
            Err(e) => {
                tracing::debug!(row, col, error = %e, "grid point skipped");
                failures.push(PointFailure {
                    row,
                    col,
                    message: e.to_string(),
                })
            }
        }
    }
    let mut counts = StageCounts {
        pooled: pooled.len(),
        ..StageCounts::default()
    };
    let kept = confidence_filter(pooled, params.min_confidence);
    counts.after_confidence = kept.len();
    let kept = nms(kept, params.nms_iou);
    counts.after_nms = kept.len();
    let kept = background_filter(kept, params.max_cover);
    counts.after_background = kept.len();
    Generation {
        masks: kept,
        failures,
        counts,
    }
}
