use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WORD: usize = 64;

/// Single-object binary raster, one bit per pixel, row-major.
///
/// Each row occupies a whole number of 64-bit words; bits past `width` in the
/// last word of a row are always zero, so derived equality compares pixels.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize) -> Self {
        let words_per_row = width.div_ceil(WORD);
        Self {
            height,
            width,
            words_per_row,
            words: vec![0; words_per_row * height],
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        let mut m = Self::new(height, width);
        for r in 0..height {
            m.fill_row_span(r, 0, width, true);
        }
        m
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(height, width);
        for r in 0..height {
            for c in 0..width {
                if f(r, c) {
                    m.set(r, c, true);
                }
            }
        }
        m
    }

    /// Builds a mask from a row-major slice of flags.
    pub fn from_bools(height: usize, width: usize, flags: &[bool]) -> Result<Self> {
        if flags.len() != height * width {
            return Err(Error::InvalidArgument(format!(
                "flag buffer has {} entries, expected {}",
                flags.len(),
                height * width
            )));
        }
        Ok(Self::from_fn(height, width, |r, c| flags[r * width + c]))
    }

    pub fn to_bools(&self) -> Vec<bool> {
        let mut out = vec![false; self.height * self.width];
        for (r, c) in self.iter_ones() {
            out[r * self.width + c] = true;
        }
        out
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.height && col < self.width);
        let w = self.words[row * self.words_per_row + col / WORD];
        (w >> (col % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        assert!(
            row < self.height && col < self.width,
            "pixel ({row},{col}) outside {}x{} mask",
            self.height,
            self.width
        );
        let idx = row * self.words_per_row + col / WORD;
        let bit = 1u64 << (col % WORD);
        if value {
            self.words[idx] |= bit;
        } else {
            self.words[idx] &= !bit;
        }
    }

    /// Sets or clears columns `[start, end)` of `row`.
    pub fn fill_row_span(&mut self, row: usize, start: usize, end: usize, value: bool) {
        let end = end.min(self.width);
        let base = row * self.words_per_row;
        let mut c = start;
        while c < end {
            let word = c / WORD;
            let lo = c % WORD;
            let hi = ((word + 1) * WORD).min(end) - word * WORD;
            let span = if hi - lo == WORD {
                u64::MAX
            } else {
                ((1u64 << (hi - lo)) - 1) << lo
            };
            if value {
                self.words[base + word] |= span;
            } else {
                self.words[base + word] &= !span;
            }
            c = word * WORD + hi;
        }
    }

    /// Number of foreground pixels.
    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn row_count(&self, row: usize) -> usize {
        self.row_words(row)
            .iter()
            .map(|w| w.count_ones() as usize)
            .sum()
    }

    pub(crate) fn row_words(&self, row: usize) -> &[u64] {
        let base = row * self.words_per_row;
        &self.words[base..base + self.words_per_row]
    }

    /// Foreground columns of one row in increasing order.
    pub fn row_ones(&self, row: usize) -> impl Iterator<Item = usize> + '_ {
        self.row_words(row)
            .iter()
            .enumerate()
            .flat_map(|(wi, &w)| BitIter(w).map(move |b| wi * WORD + b))
    }

    /// Foreground pixels as `(row, col)` in row-major order.
    pub fn iter_ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height).flat_map(move |r| self.row_ones(r).map(move |c| (r, c)))
    }

    /// Row-major index of the first foreground pixel.
    pub fn first_one(&self) -> Option<(usize, usize)> {
        self.iter_ones().next()
    }

    pub fn same_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> Result<usize> {
        self.same_dims(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum())
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(u64, u64) -> u64) -> Result<BinaryMask> {
        self.same_dims(other)?;
        Ok(BinaryMask {
            height: self.height,
            width: self.width,
            words_per_row: self.words_per_row,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a & b)
    }

    /// Pixels of `self` that are not in `other`.
    pub fn difference(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a & !b)
    }

    pub fn union_in_place(&mut self, other: &BinaryMask) -> Result<()> {
        self.same_dims(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
        Ok(())
    }

    pub fn subtract_in_place(&mut self, other: &BinaryMask) -> Result<()> {
        self.same_dims(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
        Ok(())
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> Result<bool> {
        self.same_dims(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0))
    }

    pub fn is_disjoint(&self, other: &BinaryMask) -> Result<bool> {
        Ok(self.intersection_count(other)? == 0)
    }

    /// Clears every pixel inside the inclusive box.
    pub fn clear_box(&mut self, bbox: &BBox) {
        let r1 = bbox.row_max.min(self.height.saturating_sub(1));
        for r in bbox.row_min..=r1 {
            self.fill_row_span(r, bbox.col_min, bbox.col_max + 1, false);
        }
    }

    /// Keeps only the pixels inside the inclusive box.
    pub fn clip_to_box(&self, bbox: &BBox) -> BinaryMask {
        let mut out = BinaryMask::new(self.height, self.width);
        for r in bbox.row_min..=bbox.row_max.min(self.height.saturating_sub(1)) {
            for c in self.row_ones(r) {
                if c >= bbox.col_min && c <= bbox.col_max {
                    out.set(r, c, true);
                }
            }
        }
        out
    }

    pub fn invert(&self) -> BinaryMask {
        let mut out = BinaryMask::full(self.height, self.width);
        for (a, b) in out.words.iter_mut().zip(&self.words) {
            *a &= !b;
        }
        out
    }
}

impl fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "BinaryMask({}x{}, {} set)",
            self.height,
            self.width,
            self.count()
        )?;
        if self.height * self.width <= 256 {
            for r in 0..self.height {
                f.write_str("\n  ")?;
                for c in 0..self.width {
                    f.write_str(if self.get(r, c) { "#" } else { "." })?;
                }
            }
        }
        Ok(())
    }
}

struct BitIter(u64);

impl Iterator for BitIter {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let b = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(b)
    }
}

/// Axis-aligned box with inclusive pixel bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub row_min: usize,
    pub col_min: usize,
    pub row_max: usize,
    pub col_max: usize,
}

impl BBox {
    pub fn new(row_min: usize, col_min: usize, row_max: usize, col_max: usize) -> Result<Self> {
        if row_min > row_max || col_min > col_max {
            return Err(Error::InvalidArgument(format!(
                "inverted box ({row_min},{col_min},{row_max},{col_max})"
            )));
        }
        Ok(Self {
            row_min,
            col_min,
            row_max,
            col_max,
        })
    }

    pub fn height(&self) -> usize {
        self.row_max - self.row_min + 1
    }

    pub fn width(&self) -> usize {
        self.col_max - self.col_min + 1
    }

    pub fn area(&self) -> usize {
        self.height() * self.width()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.row_min && row <= self.row_max && col >= self.col_min && col <= self.col_max
    }

    pub fn fits_within(&self, height: usize, width: usize) -> bool {
        self.row_max < height && self.col_max < width
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let row_min = self.row_min.max(other.row_min);
        let col_min = self.col_min.max(other.col_min);
        let row_max = self.row_max.min(other.row_max);
        let col_max = self.col_max.min(other.col_max);
        (row_min <= row_max && col_min <= col_max).then_some(BBox {
            row_min,
            col_min,
            row_max,
            col_max,
        })
    }

    /// True if the pixel lies on the outermost ring of the box.
    pub fn on_perimeter(&self, row: usize, col: usize) -> bool {
        self.contains(row, col)
            && (row == self.row_min
                || row == self.row_max
                || col == self.col_min
                || col == self.col_max)
    }
}

/// Provenance of a labeled mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    GroundTruth,
    Interactive,
}

/// Category id reserved for uncategorized interactive masks.
pub const UNCATEGORIZED: u32 = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledMask {
    pub mask: BinaryMask,
    pub category_id: u32,
    pub source: Source,
    /// Component index when a ground-truth mask was split into instances.
    pub instance: Option<u32>,
}

impl LabeledMask {
    pub fn ground_truth(mask: BinaryMask, category_id: u32) -> Result<Self> {
        if category_id == UNCATEGORIZED {
            return Err(Error::InvalidArgument(
                "ground-truth masks need a nonzero category id".into(),
            ));
        }
        Ok(Self {
            mask,
            category_id,
            source: Source::GroundTruth,
            instance: None,
        })
    }

    pub fn interactive(mask: BinaryMask, category_id: u32) -> Self {
        Self {
            mask,
            category_id,
            source: Source::Interactive,
            instance: None,
        }
    }

    pub fn is_ground_truth(&self) -> bool {
        self.source == Source::GroundTruth
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_spans_across_words() {
        let mut m = BinaryMask::new(2, 130);
        m.fill_row_span(1, 60, 129, true);
        assert_eq!(m.count(), 69);
        assert!(!m.get(1, 59));
        assert!(m.get(1, 60) && m.get(1, 128));
        assert!(!m.get(1, 129));
        m.fill_row_span(1, 64, 128, false);
        assert_eq!(m.row_ones(1).collect::<Vec<_>>(), vec![60, 61, 62, 63, 128]);
    }

    #[test]
    fn full_mask_has_clean_padding() {
        let m = BinaryMask::full(3, 70);
        assert_eq!(m.count(), 210);
        assert_eq!(m, BinaryMask::from_fn(3, 70, |_, _| true));
        assert!(m.invert().is_empty());
    }

    #[test]
    fn set_algebra() {
        let a = BinaryMask::from_fn(4, 4, |r, _| r < 2);
        let b = BinaryMask::from_fn(4, 4, |r, _| r == 1 || r == 2);
        assert_eq!(a.intersection_count(&b).unwrap(), 4);
        assert_eq!(a.union(&b).unwrap().count(), 12);
        assert_eq!(a.difference(&b).unwrap().count(), 4);
        assert!(a.same_dims(&BinaryMask::new(4, 5)).is_err());
    }

    #[test]
    fn ground_truth_needs_category() {
        assert!(LabeledMask::ground_truth(BinaryMask::new(1, 1), 0).is_err());
        assert!(LabeledMask::ground_truth(BinaryMask::new(1, 1), 3).is_ok());
    }

    #[test]
    fn clear_and_clip_box() {
        let b = BBox::new(1, 1, 2, 2).unwrap();
        let mut full = BinaryMask::full(4, 4);
        let clipped = full.clip_to_box(&b);
        assert_eq!(clipped.count(), 4);
        full.clear_box(&b);
        assert_eq!(full.count(), 12);
        assert!(full.is_disjoint(&clipped).unwrap());
    }
}
