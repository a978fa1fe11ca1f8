use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskcore::{
    bbox_of, component_count, connected_components, morph_clean, BBox, BinaryMask, LabeledMask,
    Source, UNCATEGORIZED,
};
use crate::proposer::CandidateMask;

pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.95;
pub const DEFAULT_CLEAN_RADIUS: usize = 1;

/// Upper bound on whole-image correction passes while searching for a
/// fixed point. Real inputs settle in two.
const MAX_PASSES: usize = 32;

/// How a generated region's box is compared with a ground-truth box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMeasure {
    /// Intersection over union of the two boxes.
    #[default]
    BoxIou,
    /// Intersection over the ground-truth box area.
    OverGtArea,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionParams {
    /// A region matches a ground-truth box when the overlap is strictly above this.
    pub threshold: f64,
    pub measure: OverlapMeasure,
    /// Radius for [`morph_clean`] on generated masks; 0 disables cleaning.
    pub clean_radius: usize,
}

impl Default for CorrectionParams {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_MATCH_THRESHOLD,
            measure: OverlapMeasure::BoxIou,
            clean_radius: DEFAULT_CLEAN_RADIUS,
        }
    }
}

/// IoU of two inclusive boxes taken as pixel sets.
pub fn box_overlap_ratio(a: &BBox, b: &BBox) -> f64 {
    box_overlap(a, b, OverlapMeasure::BoxIou)
}

pub fn box_overlap(region: &BBox, gt: &BBox, measure: OverlapMeasure) -> f64 {
    let inter = region.intersection(gt).map_or(0, |i| i.area()) as f64;
    match measure {
        OverlapMeasure::BoxIou => inter / (region.area() as f64 + gt.area() as f64 - inter),
        OverlapMeasure::OverGtArea => inter / gt.area() as f64,
    }
}

struct Region {
    mask: BinaryMask,
    bbox: BBox,
    area: usize,
    origin: usize,
}

/// Candidate `a` beats `b` on higher overlap, then larger area, then a
/// content order that does not depend on input position.
fn better(a: (&Region, f64), b: (&Region, f64)) -> bool {
    let ord =
        a.1.total_cmp(&b.1)
            .then(a.0.area.cmp(&b.0.area))
            .then_with(|| b.0.mask.iter_ones().cmp(a.0.mask.iter_ones()));
    ord == Ordering::Greater
}

fn fill_box(mask: &mut BinaryMask, b: &BBox) {
    for r in b.row_min..=b.row_max {
        mask.fill_row_span(r, b.col_min, b.col_max + 1, true);
    }
}

/// Erases `erase` and cleans until neither step changes the mask. After the
/// first step each iteration can only remove pixels, so this terminates.
fn stabilize(mask: &BinaryMask, erase: &BinaryMask, radius: usize) -> BinaryMask {
    let mut x = mask.difference(erase).expect("dims checked");
    loop {
        let next = morph_clean(&x, radius)
            .difference(erase)
            .expect("dims checked");
        if next == x {
            return x;
        }
        x = next;
    }
}

struct Plan<'a> {
    multi: Vec<&'a LabeledMask>,
    /// Single-component (and empty) ground truth in processing order.
    single: Vec<&'a LabeledMask>,
    erase: BinaryMask,
    params: CorrectionParams,
}

impl Plan<'_> {
    fn pass(&self, generated: &[BinaryMask]) -> Vec<LabeledMask> {
        let processed: Vec<BinaryMask> = generated
            .iter()
            .map(|m| stabilize(m, &self.erase, self.params.clean_radius))
            .collect();
        let regions: Vec<Region> = processed
            .iter()
            .enumerate()
            .flat_map(|(origin, m)| {
                connected_components(m).into_iter().map(move |mask| Region {
                    bbox: bbox_of(&mask).expect("components are nonempty"),
                    area: mask.count(),
                    mask,
                    origin,
                })
            })
            .collect();
        let mut consumed = vec![false; regions.len()];
        let mut out: Vec<LabeledMask> = self.multi.iter().map(|g| (*g).clone()).collect();

        for g in &self.single {
            let Ok(gb) = bbox_of(&g.mask) else {
                out.push((*g).clone());
                continue;
            };
            let mut best: Option<(usize, f64)> = None;
            for (i, region) in regions.iter().enumerate() {
                if consumed[i] {
                    continue;
                }
                let ratio = box_overlap(&region.bbox, &gb, self.params.measure);
                if ratio <= self.params.threshold {
                    continue;
                }
                if best.is_none_or(|(j, r)| better((region, ratio), (&regions[j], r))) {
                    best = Some((i, ratio));
                }
            }
            match best {
                Some((i, _)) => {
                    consumed[i] = true;
                    out.push(LabeledMask {
                        mask: regions[i].mask.clone(),
                        category_id: g.category_id,
                        source: Source::Interactive,
                        instance: g.instance,
                    });
                }
                None => out.push((*g).clone()),
            }
        }

        for (origin, mask) in processed.into_iter().enumerate() {
            let mut rest = mask;
            for (region, _) in regions
                .iter()
                .zip(&consumed)
                .filter(|(r, &c)| c && r.origin == origin)
            {
                rest.subtract_in_place(&region.mask).expect("dims checked");
            }
            if !rest.is_empty() {
                out.push(LabeledMask::interactive(rest, UNCATEGORIZED));
            }
        }
        out
    }
}

fn interactive_pieces(out: &[LabeledMask]) -> Vec<BinaryMask> {
    out.iter()
        .filter(|m| m.source == Source::Interactive)
        .map(|m| m.mask.clone())
        .collect()
}

/// Corrects generated masks against the ground truth of the same image.
///
/// Ground truth is processed in category-id order (input order within a
/// category). A ground-truth mask with several connected components erases
/// every generated pixel inside its bounding box and is emitted verbatim. A
/// single-component ground-truth mask claims the best unclaimed connected
/// region of the generated masks whose box overlap exceeds the threshold;
/// the region is emitted as an interactive mask with the ground-truth
/// category. Without a match the ground truth itself is emitted. What
/// remains of each generated mask is emitted uncategorized.
///
/// Generated masks are cleaned with [`morph_clean`]; ground truth is never
/// altered. Output order: multi-component ground truth, one entry per
/// single-component ground truth, then remainders. The whole correction is
/// repeated on its own interactive output until that output stops changing,
/// so feeding the interactive entries back in with the same ground truth
/// reproduces the result.
pub fn correct_with_gt(
    generated: &[CandidateMask],
    gt: &[LabeledMask],
    params: &CorrectionParams,
) -> Result<Vec<LabeledMask>> {
    let Some(dims) = generated
        .iter()
        .map(|c| c.mask.dims())
        .chain(gt.iter().map(|g| g.mask.dims()))
        .next()
    else {
        return Ok(Vec::new());
    };
    for found in generated
        .iter()
        .map(|c| c.mask.dims())
        .chain(gt.iter().map(|g| g.mask.dims()))
    {
        if found != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found,
            });
        }
    }

    let mut ordered: Vec<&LabeledMask> = gt.iter().collect();
    ordered.sort_by_key(|g| g.category_id);
    let (multi, single): (Vec<_>, Vec<_>) = ordered
        .into_iter()
        .partition(|g| component_count(&g.mask) >= 2);
    let mut erase = BinaryMask::new(dims.0, dims.1);
    for g in &multi {
        fill_box(&mut erase, &bbox_of(&g.mask)?);
    }
    let plan = Plan {
        multi,
        single,
        erase,
        params: *params,
    };

    let mut current: Vec<BinaryMask> = generated.iter().map(|c| c.mask.clone()).collect();
    let mut out = plan.pass(&current);
    for _ in 1..MAX_PASSES {
        let pieces = interactive_pieces(&out);
        if pieces == current {
            break;
        }
        current = pieces;
        out = plan.pass(&current);
    }
    Ok(out)
}
