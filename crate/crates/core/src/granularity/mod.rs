//! Reconciling generated masks with ground truth, and the coverage-based
//! quality policy applied to flagged subsets.

mod correct;
mod policy;

pub use correct::{
    box_overlap, box_overlap_ratio, correct_with_gt, CorrectionParams, OverlapMeasure,
    DEFAULT_CLEAN_RADIUS, DEFAULT_MATCH_THRESHOLD,
};
pub use policy::{
    apply_quality_policy, PolicyMode, QualityPolicy, QualityReport, SubsetMasks, SubsetOutcome,
    DEFAULT_MIN_FG_RATE,
};
