//! Batch tooling around `specnorm-core`: the overestimation study, timing
//! benchmarks, and normalization/reporting of kernel bundles.

pub mod bench;
pub mod bundle;
pub mod error;
pub mod normalize;
pub mod output;
pub mod report;
pub mod study;

pub use error::{HarnessError, Result};
