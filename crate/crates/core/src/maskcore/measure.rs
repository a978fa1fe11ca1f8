use crate::error::{Error, Result};

use super::{BBox, BinaryMask};

/// Intersection over union. Two empty masks agree perfectly and score 1.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let inter = a.intersection_count(b)?;
    let union = a.count() + b.count() - inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Dice coefficient `2|a∩b| / (|a|+|b|)`; 1 when both masks are empty.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let inter = a.intersection_count(b)?;
    let total = a.count() + b.count();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// Tightest inclusive box around the foreground.
pub fn bbox_of(mask: &BinaryMask) -> Result<BBox> {
    let mut rows = (0..mask.height()).filter(|&r| mask.row_count(r) > 0);
    let row_min = rows.next().ok_or(Error::EmptyMask)?;
    let row_max = rows.next_back().unwrap_or(row_min);
    let mut col_min = usize::MAX;
    let mut col_max = 0;
    for r in row_min..=row_max {
        let mut ones = mask.row_ones(r);
        if let Some(first) = ones.next() {
            col_min = col_min.min(first);
            col_max = col_max.max(ones.last().unwrap_or(first));
        }
    }
    Ok(BBox {
        row_min,
        col_min,
        row_max,
        col_max,
    })
}

/// Mean `(row, col)` of the foreground pixels.
pub fn centroid(mask: &BinaryMask) -> Result<(f64, f64)> {
    let mut n = 0usize;
    let (mut sr, mut sc) = (0f64, 0f64);
    for (r, c) in mask.iter_ones() {
        n += 1;
        sr += r as f64;
        sc += c as f64;
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok((sr / n as f64, sc / n as f64))
}

/// Foreground pixel closest to the centroid; row-major order breaks ties.
pub fn nearest_foreground_to_centroid(mask: &BinaryMask) -> Result<(usize, usize)> {
    let (cr, cc) = centroid(mask)?;
    let mut best = None;
    let mut best_d = f64::INFINITY;
    for (r, c) in mask.iter_ones() {
        let d = (r as f64 - cr).powi(2) + (c as f64 - cc).powi(2);
        if d < best_d {
            best_d = d;
            best = Some((r, c));
        }
    }
    best.ok_or(Error::EmptyMask)
}

pub fn foreground_fraction(mask: &BinaryMask) -> f64 {
    if mask.area() == 0 {
        return 0.0;
    }
    mask.count() as f64 / mask.area() as f64
}
