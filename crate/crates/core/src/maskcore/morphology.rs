//! Binary morphology with square structuring elements of side `2r+1`.
//!
//! Pixels outside the grid count as background for erosion, so an object
//! touching the border only survives an opening where a whole square fits
//! inside the grid.

use super::components::{label_flags, Connectivity};
use super::BinaryMask;

#[derive(Clone, Copy)]
enum Op {
    Erode,
    Dilate,
}

/// One separable pass along rows (`along_rows = true`) or columns.
fn line_pass(
    flags: &[bool],
    h: usize,
    w: usize,
    radius: usize,
    op: Op,
    along_rows: bool,
) -> Vec<bool> {
    let (lines, len) = if along_rows { (h, w) } else { (w, h) };
    let at = |line: usize, i: usize| {
        if along_rows {
            line * w + i
        } else {
            i * w + line
        }
    };
    let mut out = vec![false; flags.len()];
    let mut prefix = vec![0usize; len + 1];
    for line in 0..lines {
        for i in 0..len {
            prefix[i + 1] = prefix[i] + flags[at(line, i)] as usize;
        }
        for i in 0..len {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius).min(len - 1);
            let set = prefix[hi + 1] - prefix[lo];
            out[at(line, i)] = match op {
                Op::Erode => i >= radius && i + radius < len && set == 2 * radius + 1,
                Op::Dilate => set > 0,
            };
        }
    }
    out
}

fn apply(mask: &BinaryMask, radius: usize, op: Op) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (h, w) = mask.dims();
    let flags = mask.to_bools();
    let rows = line_pass(&flags, h, w, radius, op, true);
    let both = line_pass(&rows, h, w, radius, op, false);
    BinaryMask::from_bools(h, w, &both).expect("dimensions preserved")
}

pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    apply(mask, radius, Op::Erode)
}

pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    apply(mask, radius, Op::Dilate)
}

/// Erosion followed by dilation: the union of all squares that fit inside
/// the mask.
pub fn open(mask: &BinaryMask, radius: usize) -> BinaryMask {
    dilate(&erode(mask, radius), radius)
}

pub fn close(mask: &BinaryMask, radius: usize) -> BinaryMask {
    erode(&dilate(mask, radius), radius)
}

/// Sets every background pixel that cannot reach the grid border through
/// 4-connected background.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (h, w) = mask.dims();
    if h == 0 || w == 0 {
        return mask.clone();
    }
    let background: Vec<bool> = mask.to_bools().iter().map(|&b| !b).collect();
    let (labels, n) = label_flags(h, w, &background, Connectivity::Four);
    let mut touches_border = vec![false; n as usize + 1];
    for r in 0..h {
        for c in [0, w - 1] {
            touches_border[labels[r * w + c] as usize] = true;
        }
    }
    for c in 0..w {
        for r in [0, h - 1] {
            touches_border[labels[r * w + c] as usize] = true;
        }
    }
    let mut out = mask.clone();
    for (idx, &l) in labels.iter().enumerate() {
        if l != 0 && !touches_border[l as usize] {
            out.set(idx / w, idx % w, true);
        }
    }
    out
}

/// Removes specks narrower than the structuring element and fills enclosed
/// holes. Radius 0 disables cleaning and returns the input.
///
/// Holes are filled before and after the opening; the result is a fixed
/// point, so cleaning twice equals cleaning once.
pub fn morph_clean(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    fill_holes(&open(&fill_holes(mask), radius))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_with_hole() -> BinaryMask {
        let mut m = BinaryMask::from_fn(9, 9, |r, c| (2..7).contains(&r) && (2..7).contains(&c));
        m.set(3, 3, false);
        m
    }

    #[test]
    fn radius_zero_is_identity() {
        let m = square_with_hole();
        assert_eq!(morph_clean(&m, 0), m);
    }

    #[test]
    fn interior_hole_is_filled() {
        let solid = BinaryMask::from_fn(9, 9, |r, c| (2..7).contains(&r) && (2..7).contains(&c));
        assert_eq!(morph_clean(&square_with_hole(), 1), solid);
        // hole at the exact center is filled too
        let mut centered = solid.clone();
        centered.set(4, 4, false);
        assert_eq!(morph_clean(&centered, 1), solid);
    }

    #[test]
    fn isolated_pixel_is_removed() {
        let mut m = BinaryMask::new(7, 7);
        m.set(3, 3, true);
        assert!(morph_clean(&m, 1).is_empty());
    }

    #[test]
    fn opening_keeps_full_grid() {
        let full = BinaryMask::full(6, 6);
        assert_eq!(open(&full, 1), full);
        assert_eq!(erode(&full, 1).count(), 16);
    }

    #[test]
    fn erosion_and_dilation_of_block() {
        let block = BinaryMask::from_fn(10, 10, |r, c| (2..7).contains(&r) && (3..8).contains(&c));
        let eroded = erode(&block, 1);
        assert_eq!(eroded.count(), 9);
        assert_eq!(dilate(&eroded, 1), block);
        assert_eq!(close(&block, 1), block);
    }

    #[test]
    fn hole_touching_border_is_not_filled() {
        // U shape opening onto the top border
        let u = BinaryMask::from_fn(5, 5, |r, c| c == 0 || c == 4 || r == 4);
        assert_eq!(fill_holes(&u), u);
    }
}
