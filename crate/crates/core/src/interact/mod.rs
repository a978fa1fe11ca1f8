//! Simulated users: prompt synthesis, the multi-round correction loop,
//! training-time augmentation and the robustness protocols.

mod augment;
mod prompts;
mod session;
mod sweep;

pub use augment::{augment_intensity, sample_targets, scale_shift, AugmentParams};
pub use prompts::{
    error_region, jitter_box, sample_bbox, sample_click, sample_correction_click,
    sample_initial_click, ClickPlacement, ErrorRegion, DEFAULT_JITTER,
};
pub use session::{
    downsample_mask, predict, replay_prompts, replay_step, run_session, InitialPrompt, Round,
    Session, Strategy, DEFAULT_ROUNDS,
};
pub use sweep::{
    robustness_sweep, Arm, Protocol, SweepConfig, SweepImage, SweepRecord, SweepReport,
    DEFAULT_MAX_INTERACTIONS,
};
