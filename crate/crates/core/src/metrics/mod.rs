//! Losses, Dice aggregation and dataset statistics.

mod aggregate;
mod loss;
mod stats;

pub use aggregate::{
    aggregate, group_sums, report_from_sums, AggregateReport, EvalRecord, GroupBy, GroupScore,
    GroupSums,
};
pub use loss::{
    combined_loss, dice_loss, focal_loss, ProbMap, DEFAULT_ALPHA, DEFAULT_GAMMA, DICE_SMOOTH,
    DICE_WEIGHT, EPS, FOCAL_WEIGHT,
};
pub use stats::{
    coverage_bin, dataset_stats, resolution_bucket, Bin, SourceCounts, StatsAccumulator,
    StatsReport, COVERAGE_BINS, RESOLUTION_BUCKETS,
};
