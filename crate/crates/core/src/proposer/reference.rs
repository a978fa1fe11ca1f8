//! Classical reference segmenter: seeded region growing for clicks and an
//! Otsu split for boxes.

use crate::error::{Error, Result};
use crate::maskcore::{components_with, iou, BBox, BinaryMask, Connectivity, ImageGrid};

use super::prompt::{Polarity, Prompt, PromptSet};
use super::segmenter::{CandidateMask, Segmenter, SegmenterError};

/// Relative tolerance perturbation used for the stability score.
pub const STABILITY_DELTA: f64 = 0.25;

pub const DEFAULT_TOLERANCE: f64 = 16.0;

/// 8-connected flood from `seed` over pixels within `tolerance` of the seed
/// intensity.
pub fn region_grow(
    gray: &[u8],
    height: usize,
    width: usize,
    seed: (usize, usize),
    tolerance: f64,
) -> BinaryMask {
    let s = gray[seed.0 * width + seed.1] as f64;
    let mut accept = [false; 256];
    for (v, a) in accept.iter_mut().enumerate() {
        *a = (v as f64 - s).abs() <= tolerance;
    }
    let mut filled = vec![false; height * width];
    let mut mask = BinaryMask::new(height, width);
    // Span fill: each stack entry is an accepted, unfilled pixel.
    let mut stack = vec![seed];
    while let Some((r, c)) = stack.pop() {
        let row = r * width;
        if filled[row + c] {
            continue;
        }
        let mut lo = c;
        while lo > 0 && !filled[row + lo - 1] && accept[gray[row + lo - 1] as usize] {
            lo -= 1;
        }
        let mut hi = c + 1;
        while hi < width && !filled[row + hi] && accept[gray[row + hi] as usize] {
            hi += 1;
        }
        filled[row + lo..row + hi].fill(true);
        mask.fill_row_span(r, lo, hi, true);
        let (from, to) = (lo.saturating_sub(1), (hi + 1).min(width));
        for nr in [r.wrapping_sub(1), r + 1] {
            if nr >= height {
                continue;
            }
            let nrow = nr * width;
            let mut in_run = false;
            for nc in from..to {
                let ok = !filled[nrow + nc] && accept[gray[nrow + nc] as usize];
                if ok && !in_run {
                    stack.push((nr, nc));
                }
                in_run = ok;
            }
        }
    }
    mask
}

/// Region grown from `click` at `tolerance`, scored by the IoU of the regions
/// grown at `tolerance * (1 ± 0.25)`.
pub fn region_grow_segment(
    image: &ImageGrid,
    click: (usize, usize),
    tolerance: f64,
) -> Result<CandidateMask> {
    if !image.contains(click.0, click.1) {
        return Err(Error::OutOfRange(format!(
            "click {click:?} outside {:?} image",
            image.dims()
        )));
    }
    if !tolerance.is_finite() || tolerance < 0.0 {
        return Err(Error::InvalidArgument(format!("tolerance {tolerance}")));
    }
    let gray = image.luminance();
    let (h, w) = image.dims();
    let mask = region_grow(&gray, h, w, click, tolerance);
    let tight = region_grow(&gray, h, w, click, tolerance * (1.0 - STABILITY_DELTA));
    let loose = region_grow(&gray, h, w, click, tolerance * (1.0 + STABILITY_DELTA));
    let confidence = iou(&tight, &loose)?;
    CandidateMask::new(mask, confidence)
}

/// Otsu threshold over 8-bit samples: the `t` maximizing between-class
/// variance where the lower class is `v <= t`. The smallest maximizing `t`
/// wins; `None` when the samples do not split into two nonempty classes.
pub fn otsu_threshold(values: &[u8]) -> Option<u8> {
    let mut hist = [0u64; 256];
    for &v in values {
        hist[v as usize] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &n)| i as f64 * n as f64)
        .sum();
    let (mut w0, mut sum0) = (0f64, 0f64);
    let mut best: Option<(u8, f64)> = None;
    for (t, &n) in hist.iter().enumerate().take(255) {
        w0 += n as f64;
        sum0 += t as f64 * n as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if best.is_none_or(|(_, b)| between > b) {
            best = Some((t as u8, between));
        }
    }
    best.map(|(t, _)| t)
}

fn mean(values: impl Iterator<Item = u8>) -> f64 {
    let (mut n, mut s) = (0usize, 0f64);
    for v in values {
        n += 1;
        s += v as f64;
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Box path of the reference segmenter.
///
/// Otsu-splits the box interior, takes the class whose mean is furthest from
/// the mean of the box's perimeter ring, and keeps its largest 8-connected
/// component (components reaching inside the perimeter are preferred).
/// Confidence is that component's share of its class. A box whose interior
/// does not split yields the whole box at confidence 0.5.
pub fn box_segment(image: &ImageGrid, bbox: &BBox) -> Result<CandidateMask> {
    let (h, w) = image.dims();
    if !bbox.fits_within(h, w) {
        return Err(Error::OutOfRange(format!(
            "box {bbox:?} outside {h}x{w} image"
        )));
    }
    let gray = image.luminance();
    let inside: Vec<u8> = (bbox.row_min..=bbox.row_max)
        .flat_map(|r| (bbox.col_min..=bbox.col_max).map(move |c| (r, c)))
        .map(|(r, c)| gray[r * w + c])
        .collect();
    let full_box = || BinaryMask::from_fn(h, w, |r, c| bbox.contains(r, c));
    let Some(t) = otsu_threshold(&inside) else {
        return CandidateMask::new(full_box(), 0.5);
    };

    let ring_mean = mean(
        (bbox.row_min..=bbox.row_max)
            .flat_map(|r| (bbox.col_min..=bbox.col_max).map(move |c| (r, c)))
            .filter(|&(r, c)| bbox.on_perimeter(r, c))
            .map(|(r, c)| gray[r * w + c]),
    );
    let low_mean = mean(inside.iter().copied().filter(|&v| v <= t));
    let high_mean = mean(inside.iter().copied().filter(|&v| v > t));
    let take_high = (high_mean - ring_mean).abs() >= (low_mean - ring_mean).abs();

    let class = BinaryMask::from_fn(h, w, |r, c| {
        bbox.contains(r, c) && ((gray[r * w + c] > t) == take_high)
    });
    let class_area = class.count();
    let comps = components_with(&class, Connectivity::Eight);
    let reaches_interior = |m: &BinaryMask| m.iter_ones().any(|(r, c)| !bbox.on_perimeter(r, c));
    let pool: Vec<&BinaryMask> = if comps.iter().any(reaches_interior) {
        comps.iter().filter(|m| reaches_interior(m)).collect()
    } else {
        comps.iter().collect()
    };
    let best = pool
        .into_iter()
        .reduce(|a, b| if b.count() > a.count() { b } else { a })
        .cloned()
        .unwrap_or_else(full_box);
    let confidence = if class_area == 0 {
        0.5
    } else {
        best.count() as f64 / class_area as f64
    };
    CandidateMask::new(best, confidence)
}

/// The reference [`Segmenter`].
///
/// Prompts are applied in order: a box replaces the working mask with its box
/// segmentation, a positive click adds its grown region, a negative click
/// removes its grown region. Text prompts carry no meaning for a classical
/// method and are rejected when nothing else is given. The low-resolution
/// prior is ignored.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceSegmenter {
    pub tolerance: f64,
}

impl Default for ReferenceSegmenter {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

impl ReferenceSegmenter {
    pub fn new(tolerance: f64) -> Self {
        Self { tolerance }
    }
}

impl Segmenter for ReferenceSegmenter {
    fn segment(
        &self,
        image: &ImageGrid,
        prompts: &PromptSet,
        _seed: u64,
    ) -> std::result::Result<Vec<CandidateMask>, SegmenterError> {
        if prompts.is_text_only() {
            return Err(SegmenterError::Unsupported(
                "the reference segmenter cannot interpret text prompts".into(),
            ));
        }
        let fail = |e: Error| SegmenterError::Failed(e.to_string());
        let (h, w) = image.dims();
        let mut mask = BinaryMask::new(h, w);
        let mut confidences = Vec::new();
        for p in &prompts.prompts {
            match *p {
                Prompt::Box(b) => {
                    let c = box_segment(image, &b).map_err(fail)?;
                    mask = c.mask;
                    confidences.push(c.confidence);
                }
                Prompt::Click { row, col, polarity } => {
                    let c = region_grow_segment(image, (row, col), self.tolerance).map_err(fail)?;
                    match polarity {
                        Polarity::Positive => mask.union_in_place(&c.mask),
                        Polarity::Negative => mask.subtract_in_place(&c.mask),
                    }
                    .map_err(fail)?;
                    confidences.push(c.confidence);
                }
                Prompt::Text { .. } => {}
            }
        }
        if confidences.is_empty() {
            return Ok(Vec::new());
        }
        let confidence = confidences.iter().sum::<f64>() / confidences.len() as f64;
        Ok(vec![CandidateMask::new(mask, confidence).map_err(fail)?])
    }
}
