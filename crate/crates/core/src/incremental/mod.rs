//! Incremental dictionary learning: online updates from sufficient statistics
//! and stochastic (sub)gradient steps with decaying, accelerated and momentum
//! step rules.
//!
//! Both solvers optimize the sample-averaged objective and evaluate it with a
//! full code re-solve for the current dictionary.

mod online;
mod schedule;
mod sgd;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::batch::{random_factorization, Problem};
use crate::error::{invalid, shape, DlmError, Result};
use crate::matrix::{DenseMatrix, Observations};
use crate::model::{CodeSolver, InnerConfig, SamplePenalty};
use crate::spec::ProblemSpec;

pub use online::{online_am_dlm, online_beta, OnlineConfig, OnlineState, MIN_BETA};
pub use schedule::{accelerated_step, schedule_step_size, Schedule, SgdState};
pub use sgd::{sgd_am_dlm, SgdConfig};

/// Samples as the columns of a `d x T` matrix.
fn sample_matrix(samples: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let first = samples.first().ok_or_else(|| invalid("the sample stream is empty"))?;
    let d = first.len();
    if d == 0 {
        return Err(invalid("samples must be non-empty vectors"));
    }
    if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| s.len() != d) {
        return Err(shape(format!("sample {i} has length {}, expected {d}", s.len())));
    }
    if samples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(DlmError::NonFinite("samples contain non-finite values".into()));
    }
    Ok(DMatrix::from_fn(d, samples.len(), |r, c| samples[c][r]))
}

/// Checks shared by both solvers and returns the averaged form of `spec`.
fn prepare(spec: &ProblemSpec) -> Result<ProblemSpec> {
    spec.validate()?;
    SamplePenalty::from_spec(spec)?;
    Ok(spec.clone().with_averaged(true))
}

fn initial_dictionary(
    init: Option<&DenseMatrix>,
    d: usize,
    t: usize,
    spec: &ProblemSpec,
    sd: Option<f64>,
    seed: u64,
) -> Result<DMatrix<f64>> {
    match init {
        Some(m) if m.shape() != (d, spec.k) => {
            Err(shape(format!("initial dictionary is {:?}, expected ({d}, {})", m.shape(), spec.k)))
        }
        Some(m) => Ok(m.as_matrix().clone()),
        None => {
            // same draw as the batch solver with this seed
            let sd = sd.unwrap_or(1.0 / (spec.k as f64).sqrt());
            Ok(random_factorization(d, spec.k, t, 0.0, sd, seed)?.into_parts().0.into_matrix())
        }
    }
}

/// Averaged objective at `d` with every code re-solved.
fn full_objective(d: &DMatrix<f64>, x: &DMatrix<f64>, spec: &ProblemSpec) -> Result<f64> {
    let cfg = InnerConfig::default();
    let h = CodeSolver::new(d, spec, &cfg)?.solve_all(x, None);
    let obs: Observations = DenseMatrix::new(x.clone())?.into();
    let value = Problem::new(spec, &obs)?.objective(d, &h);
    if !value.is_finite() {
        return Err(DlmError::NonFinite(format!("objective became {value}")));
    }
    Ok(value)
}

/// Visiting order for one epoch; each epoch uses its own stream of the seeded
/// generator, so orders do not depend on earlier epochs.
fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

fn column(x: &DMatrix<f64>, j: usize) -> DVector<f64> {
    x.column(j).into_owned()
}
