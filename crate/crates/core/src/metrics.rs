//! Solution-comparison metrics for multi-initialization studies.

use crate::error::{invalid, Result};
use crate::matrix::DenseMatrix;

/// Default entry threshold for [`thresholded_solution_difference`].
pub const DEFAULT_SOLUTION_THRESHOLD: f64 = 0.05;

/// Largest pairwise `|a - b|` divided by the mean of all objectives.
pub fn relative_objective_difference(objs: &[f64]) -> Result<f64> {
    if objs.is_empty() {
        return Err(invalid("at least one objective is required"));
    }
    if objs.iter().any(|v| !v.is_finite()) {
        return Err(invalid("objectives must be finite"));
    }
    let mean = objs.iter().sum::<f64>() / objs.len() as f64;
    if mean == 0.0 {
        return Err(invalid("mean objective is zero"));
    }
    // the largest pairwise gap is max - min
    let max = objs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = objs.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((max - min) / mean.abs())
}

/// Fraction of entries with `|z1 - z2| > tau`.
pub fn thresholded_solution_difference(z1: &DenseMatrix, z2: &DenseMatrix, tau: f64) -> Result<f64> {
    if z1.shape() != z2.shape() {
        return Err(invalid(format!("shape mismatch: {:?} vs {:?}", z1.shape(), z2.shape())));
    }
    if !(tau >= 0.0) {
        return Err(invalid(format!("threshold must be non-negative, got {tau}")));
    }
    let a = z1.as_matrix();
    let b = z2.as_matrix();
    let count = a.iter().zip(b.iter()).filter(|(x, y)| (*x - *y).abs() > tau).count();
    Ok(count as f64 / a.len() as f64)
}
