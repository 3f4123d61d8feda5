//! Dictionary learning by alternating minimization: objectives, proximal
//! operators, batch and incremental solvers, and numerical optimality checks.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod batch;
pub mod certify;
mod error;
pub mod incremental;
mod matrix;
pub mod metrics;
pub mod model;
mod report;
mod spec;

pub use error::{DlmError, Result};
pub use matrix::{DenseMatrix, Factorization, Observations, ObservedMatrix};
pub use report::TrialReport;
pub use spec::{DiagWeights, LossSpec, Orientation, ProblemSpec, RegularizerSpec};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
