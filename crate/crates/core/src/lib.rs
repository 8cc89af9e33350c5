//! Simulation of EuroNCAP VRU test cases with vehicle-mounted and roadside
//! sensors, emergency-braking evaluation and sweep reporting.

// Validation uses `!(x > 0.0)` style checks on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aeb;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod ingest;
pub mod metrics;
pub mod placement;
pub mod scenario;
pub mod sensing;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
