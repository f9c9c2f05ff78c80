//! Optimizer, random streams and summary statistics.

pub mod optimize;
pub mod rng;
pub mod stats;

pub use optimize::{maximize_scalar, Maximum, OptimizeError};
pub use rng::{assign_teachers, derive_seed, sample_normal, RngStream};
pub use stats::{summarize, DistributionSummary, HistogramRange};
