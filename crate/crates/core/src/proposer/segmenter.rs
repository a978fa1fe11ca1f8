use thiserror::Error;

use crate::error::{Error as CrateError, Result};
use crate::maskcore::{bbox_of, BinaryMask, ImageGrid, LabeledMask};

use super::prompt::{Polarity, Prompt, PromptSet};

/// A mask proposal with its confidence in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateMask {
    pub mask: BinaryMask,
    pub confidence: f64,
}

impl CandidateMask {
    pub fn new(mask: BinaryMask, confidence: f64) -> Result<Self> {
        if !confidence.is_finite() || !(0.0..=1.0).contains(&confidence) {
            return Err(CrateError::OutOfRange(format!(
                "confidence {confidence} is not in [0, 1]"
            )));
        }
        Ok(Self { mask, confidence })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SegmenterError {
    /// The segmenter cannot interpret this kind of prompt.
    #[error("unsupported prompt: {0}")]
    Unsupported(String),
    #[error("segmenter failed: {0}")]
    Failed(String),
}

/// The pluggable segmenter contract: image plus prompts in, candidate masks
/// out. Implementations must be deterministic for a given `seed` and return
/// masks matching the image dimensions.
pub trait Segmenter: Send + Sync {
    fn segment(
        &self,
        image: &ImageGrid,
        prompts: &PromptSet,
        seed: u64,
    ) -> std::result::Result<Vec<CandidateMask>, SegmenterError>;
}

impl<S: Segmenter + ?Sized> Segmenter for &S {
    fn segment(
        &self,
        image: &ImageGrid,
        prompts: &PromptSet,
        seed: u64,
    ) -> std::result::Result<Vec<CandidateMask>, SegmenterError> {
        (**self).segment(image, prompts, seed)
    }
}

impl<S: Segmenter + ?Sized> Segmenter for std::sync::Arc<S> {
    fn segment(
        &self,
        image: &ImageGrid,
        prompts: &PromptSet,
        seed: u64,
    ) -> std::result::Result<Vec<CandidateMask>, SegmenterError> {
        (**self).segment(image, prompts, seed)
    }
}

/// Calls the segmenter and checks its output against the contract.
pub fn query(
    segmenter: &dyn Segmenter,
    image: &ImageGrid,
    prompts: &PromptSet,
    seed: u64,
) -> Result<Vec<CandidateMask>> {
    let out = segmenter.segment(image, prompts, seed)?;
    for c in &out {
        if c.mask.dims() != image.dims() {
            return Err(SegmenterError::Failed(format!(
                "returned a {:?} mask for a {:?} image",
                c.mask.dims(),
                image.dims()
            ))
            .into());
        }
        if !c.confidence.is_finite() || !(0.0..=1.0).contains(&c.confidence) {
            return Err(SegmenterError::Failed(format!(
                "confidence {} out of range",
                c.confidence
            ))
            .into());
        }
    }
    Ok(out)
}

/// Highest-confidence candidate (earliest on ties).
pub fn best_candidate(cands: &[CandidateMask]) -> Option<&CandidateMask> {
    cands.iter().reduce(|best, c| {
        if c.confidence > best.confidence {
            c
        } else {
            best
        }
    })
}

/// Answers prompts from a fixed set of known objects with confidence 1.
///
/// The most recent positive click selects the object containing it; failing
/// that, the most recent box selects the object whose bounding box overlaps
/// it best (with no overlap, the one whose box center is nearest); failing
/// that, a text prompt selects the first object of that category.
#[derive(Debug, Clone, Default)]
pub struct OracleSegmenter {
    pub objects: Vec<LabeledMask>,
}

impl OracleSegmenter {
    pub fn new(objects: Vec<LabeledMask>) -> Self {
        Self { objects }
    }

    fn pick(&self, prompts: &PromptSet) -> Option<&LabeledMask> {
        let click = prompts.prompts.iter().rev().find_map(|p| match *p {
            Prompt::Click {
                row,
                col,
                polarity: Polarity::Positive,
            } => Some((row, col)),
            _ => None,
        });
        if let Some((r, c)) = click {
            return self.objects.iter().find(|o| o.mask.get(r, c));
        }
        let bx = prompts.prompts.iter().rev().find_map(|p| match p {
            Prompt::Box(b) => Some(*b),
            _ => None,
        });
        if let Some(b) = bx {
            // Best box IoU; when nothing overlaps, the nearest box center.
            let center = |x: &crate::maskcore::BBox| {
                (
                    (x.row_min + x.row_max) as f64 / 2.0,
                    (x.col_min + x.col_max) as f64 / 2.0,
                )
            };
            let (br, bc) = center(&b);
            return self
                .objects
                .iter()
                .filter_map(|o| {
                    let ob = bbox_of(&o.mask).ok()?;
                    let inter = ob.intersection(&b).map_or(0, |i| i.area());
                    let ratio = inter as f64 / (ob.area() + b.area() - inter) as f64;
                    let (or, oc) = center(&ob);
                    Some((o, ratio, -((or - br).powi(2) + (oc - bc).powi(2))))
                })
                .fold(None::<(&LabeledMask, f64, f64)>, |best, cur| match best {
                    Some((_, r, d)) if (r, d) >= (cur.1, cur.2) => best,
                    _ => Some(cur),
                })
                .map(|(o, _, _)| o);
        }
        prompts.prompts.iter().find_map(|p| match p {
            Prompt::Text { category_id } => {
                self.objects.iter().find(|o| o.category_id == *category_id)
            }
            _ => None,
        })
    }
}

impl Segmenter for OracleSegmenter {
    fn segment(
        &self,
        image: &ImageGrid,
        prompts: &PromptSet,
        _seed: u64,
    ) -> std::result::Result<Vec<CandidateMask>, SegmenterError> {
        Ok(self
            .pick(prompts)
            .filter(|o| o.mask.dims() == image.dims())
            .map(|o| CandidateMask {
                mask: o.mask.clone(),
                confidence: 1.0,
            })
            .into_iter()
            .collect())
    }
}
