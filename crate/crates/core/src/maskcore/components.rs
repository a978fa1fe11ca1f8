use std::collections::VecDeque;

use super::BinaryMask;

/// Pixel adjacency used for region labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    /// N, S, E, W.
    Four,
    /// All eight neighbors.
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
        const EIGHT: [(isize, isize); 8] = [
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

/// Labels a row-major flag raster. Returns per-pixel labels (0 = unset,
/// components numbered from 1 in order of their first pixel) and the
/// number of components.
pub fn label_flags(
    height: usize,
    width: usize,
    flags: &[bool],
    connectivity: Connectivity,
) -> (Vec<u32>, u32) {
    let mut labels = vec![0u32; height * width];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..flags.len() {
        if !flags[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            let (r, c) = ((idx / width) as isize, (idx % width) as isize);
            for &(dr, dc) in connectivity.offsets() {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= height as isize || nc >= width as isize {
                    continue;
                }
                let n = nr as usize * width + nc as usize;
                if flags[n] && labels[n] == 0 {
                    labels[n] = next;
                    queue.push_back(n);
                }
            }
        }
    }
    (labels, next)
}

/// Splits the foreground into maximal 8-connected regions, ordered by the
/// row-major position of each region's first pixel.
pub fn connected_components(mask: &BinaryMask) -> Vec<BinaryMask> {
    components_with(mask, Connectivity::Eight)
}

pub fn components_with(mask: &BinaryMask, connectivity: Connectivity) -> Vec<BinaryMask> {
    if mask.is_empty() {
        return Vec::new();
    }
    let (h, w) = mask.dims();
    let (labels, n) = label_flags(h, w, &mask.to_bools(), connectivity);
    let mut out = vec![BinaryMask::new(h, w); n as usize];
    for (idx, &l) in labels.iter().enumerate() {
        if l != 0 {
            out[l as usize - 1].set(idx / w, idx % w, true);
        }
    }
    out
}

pub fn component_count(mask: &BinaryMask) -> usize {
    if mask.is_empty() {
        return 0;
    }
    let (h, w) = mask.dims();
    label_flags(h, w, &mask.to_bools(), Connectivity::Eight).1 as usize
}

/// Largest 8-connected component; the earliest one wins ties.
pub fn largest_component(mask: &BinaryMask) -> Option<BinaryMask> {
    let mut best: Option<BinaryMask> = None;
    for comp in connected_components(mask) {
        if best.as_ref().is_none_or(|b| comp.count() > b.count()) {
            best = Some(comp);
        }
    }
    best
}
