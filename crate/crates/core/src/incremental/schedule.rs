use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};
use crate::matrix::DenseMatrix;

/// Step-size decay `eta0`, `eta0 / sqrt(t)` or `eta0 / t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Type1,
    #[default]
    Type2,
    Type3,
}

/// Step size at step `t >= 1`.
pub fn schedule_step_size(kind: Schedule, eta0: f64, t: usize) -> Result<f64> {
    if t < 1 {
        return Err(invalid("step index starts at 1"));
    }
    if !(eta0 > 0.0 && eta0.is_finite()) {
        return Err(invalid(format!("eta0 must be positive, got {eta0}")));
    }
    Ok(match kind {
        Schedule::Type1 => eta0,
        Schedule::Type2 => eta0 / (t as f64).sqrt(),
        Schedule::Type3 => eta0 / t as f64,
    })
}

/// Dictionary iterate and step-size memory of the stochastic solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub d: DMatrix<f64>,
    pub d_prev: DMatrix<f64>,
    pub grad_prev: DMatrix<f64>,
    pub eta: f64,
    pub decrease_count: usize,
    /// Index of the current step, starting at 1.
    pub t: usize,
}

impl SgdState {
    pub fn new(d: &DenseMatrix, eta0: f64) -> Result<Self> {
        if !(eta0 > 0.0 && eta0.is_finite()) {
            return Err(invalid(format!("eta0 must be positive, got {eta0}")));
        }
        let d = d.as_matrix().clone();
        let (r, c) = d.shape();
        Ok(Self { d_prev: d.clone(), d, grad_prev: DMatrix::zeros(r, c), eta: eta0, decrease_count: 0, t: 1 })
    }
}

/// Keeps the current step while consecutive stochastic gradients agree
/// (`tr(grad_t^T grad_prev) >= 0`); otherwise drops it to the schedule's value
/// at the current step and counts the decrease. The returned sequence never
/// increases.
pub fn accelerated_step(state: &mut SgdState, grad_t: &DenseMatrix, kind: Schedule, eta0: f64) -> Result<f64> {
    let g = grad_t.as_matrix();
    if g.shape() != state.grad_prev.shape() {
        return Err(shape(format!("gradient is {:?}, dictionary is {:?}", g.shape(), state.grad_prev.shape())));
    }
    if g.dot(&state.grad_prev) < 0.0 {
        let next = schedule_step_size(kind, eta0, state.t)?;
        if next < state.eta {
            state.eta = next;
            state.decrease_count += 1;
        }
    }
    Ok(state.eta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        assert_eq!(schedule_step_size(Schedule::Type2, 0.5, 4).unwrap(), 0.25);
        assert_eq!(schedule_step_size(Schedule::Type1, 0.5, 99).unwrap(), 0.5);
        assert_eq!(schedule_step_size(Schedule::Type3, 5.0, 10).unwrap(), 0.5);
        assert!(schedule_step_size(Schedule::Type3, 5.0, 0).is_err());
    }

    #[test]
    fn acceleration_rules() {
        let d = DenseMatrix::zeros(2, 2);
        let g = DenseMatrix::identity(2);
        let mut state = SgdState::new(&d, 0.5).unwrap();
        // zero previous gradient counts as agreement
        assert_eq!(accelerated_step(&mut state, &g, Schedule::Type2, 0.5).unwrap(), 0.5);
        state.grad_prev = g.as_matrix().clone();
        assert_eq!(accelerated_step(&mut state, &g, Schedule::Type2, 0.5).unwrap(), 0.5);
        state.t = 16;
        let neg = DenseMatrix::new(-g.as_matrix()).unwrap();
        assert_eq!(accelerated_step(&mut state, &neg, Schedule::Type2, 0.5).unwrap(), 0.125);
        assert_eq!(state.decrease_count, 1);
    }
}
