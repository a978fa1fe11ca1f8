//! Prompted segmentation: the segmenter contract, a classical reference
//! segmenter, an external-process adapter and grid-based mask generation.

mod generation;
mod process;
mod prompt;
mod reference;
mod segmenter;

pub use generation::{
    background_filter, confidence_filter, generate_interactive_masks, grid_points, nms, nms_order,
    Generation, GenerationParams, PointFailure, StageCounts, DEFAULT_GRID, DEFAULT_MAX_COVER,
    DEFAULT_MIN_CONFIDENCE, DEFAULT_NMS_IOU,
};
pub use process::{serve_stdio, ProcessSegmenter, SegmentRequest, SegmentResponse};
pub use prompt::{render_text_prompt, Polarity, Prompt, PromptSet, PRIOR_SIZE};
pub use reference::{
    box_segment, otsu_threshold, region_grow, region_grow_segment, ReferenceSegmenter,
    DEFAULT_TOLERANCE, STABILITY_DELTA,
};
pub use segmenter::{
    best_candidate, query, CandidateMask, OracleSegmenter, Segmenter, SegmenterError,
};
