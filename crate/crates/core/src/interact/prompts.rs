use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskcore::{
    bbox_of, largest_component, nearest_foreground_to_centroid, BBox, BinaryMask,
};
use crate::proposer::Prompt;

pub const DEFAULT_JITTER: usize = 5;

/// Where the initial click is placed inside the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClickPlacement {
    /// Uniformly random foreground pixel.
    #[default]
    Uniform,
    /// Foreground pixel nearest the centroid.
    Centroid,
}

/// A uniformly random foreground pixel of `mask`.
pub fn sample_click<R: Rng + ?Sized>(mask: &BinaryMask, rng: &mut R) -> Result<(usize, usize)> {
    let n = mask.count();
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let k = rng.gen_range(0..n);
    Ok(mask.iter_ones().nth(k).expect("k < count"))
}

pub fn sample_initial_click<R: Rng + ?Sized>(
    target: &BinaryMask,
    placement: ClickPlacement,
    rng: &mut R,
) -> Result<Prompt> {
    let (row, col) = match placement {
        ClickPlacement::Uniform => sample_click(target, rng)?,
        ClickPlacement::Centroid => nearest_foreground_to_centroid(target)?,
    };
    Ok(Prompt::positive(row, col))
}

/// Shifts `(row_min, col_min, row_max, col_max)` by `offsets`, clamps to the
/// grid and swaps any inverted pair.
pub fn jitter_box(tight: &BBox, offsets: [i64; 4], height: usize, width: usize) -> BBox {
    let shift = |v: usize, d: i64, len: usize| (v as i64 + d).clamp(0, len as i64 - 1) as usize;
    let r0 = shift(tight.row_min, offsets[0], height);
    let c0 = shift(tight.col_min, offsets[1], width);
    let r1 = shift(tight.row_max, offsets[2], height);
    let c1 = shift(tight.col_max, offsets[3], width);
    BBox {
        row_min: r0.min(r1),
        col_min: c0.min(c1),
        row_max: r0.max(r1),
        col_max: c0.max(c1),
    }
}

/// Tight box of the target with each coordinate offset by an integer drawn
/// uniformly from `[-jitter, jitter]`.
pub fn sample_bbox<R: Rng + ?Sized>(
    target: &BinaryMask,
    jitter: usize,
    rng: &mut R,
) -> Result<Prompt> {
    let tight = bbox_of(target)?;
    let j = jitter as i64;
    let offsets = [(); 4].map(|_| rng.gen_range(-j..=j));
    Ok(Prompt::Box(jitter_box(
        &tight,
        offsets,
        target.height(),
        target.width(),
    )))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorRegion {
    /// Target pixels the prediction missed.
    pub false_neg: BinaryMask,
    /// Predicted pixels outside the target.
    pub false_pos: BinaryMask,
}

impl ErrorRegion {
    pub fn is_empty(&self) -> bool {
        self.false_neg.is_empty() && self.false_pos.is_empty()
    }
}

pub fn error_region(pred: &BinaryMask, target: &BinaryMask) -> Result<ErrorRegion> {
    Ok(ErrorRegion {
        false_neg: target.difference(pred)?,
        false_pos: pred.difference(target)?,
    })
}

/// Clicks inside the largest connected component of the larger error side
/// (false negatives on ties): positive on a miss, negative on a false alarm.
pub fn sample_correction_click<R: Rng + ?Sized>(err: &ErrorRegion, rng: &mut R) -> Result<Prompt> {
    if err.is_empty() {
        return Err(Error::NothingToCorrect);
    }
    let negative = err.false_pos.count() > err.false_neg.count();
    let side = if negative {
        &err.false_pos
    } else {
        &err.false_neg
    };
    let comp = largest_component(side).expect("side is nonempty");
    let (row, col) = sample_click(&comp, rng)?;
    Ok(if negative {
        Prompt::negative(row, col)
    } else {
        Prompt::positive(row, col)
    })
}
