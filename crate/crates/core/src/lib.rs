//! Interactive-mask dataset construction and simulated interactive
//! segmentation.

mod error;
pub mod fixtures;
pub mod granularity;
pub mod ingest;
pub mod interact;
pub mod maskcore;
pub mod metrics;
pub mod proposer;
pub mod seed;
pub mod storage;
pub mod taxonomy;

pub use error::{Error, Result};
