//! Experiment protocols, data generation, CSV/JSON I/O and the `dlm-opt`
//! command line built on `dlm-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod cli;
pub mod config;
pub mod csv_io;
pub mod data;
mod error;
pub mod experiments;
pub mod manifest;
pub mod pool;
pub mod prox_check;

pub use error::{HarnessError, Result};
