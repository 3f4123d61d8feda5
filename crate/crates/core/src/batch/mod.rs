//! Batch alternating minimization with one (proximal) gradient step per factor
//! per outer iteration.

mod init;
mod objective;
mod steps;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, DlmError, Result};
use crate::matrix::{Factorization, Observations};
use crate::report::TrialReport;
use crate::spec::ProblemSpec;

pub use init::{random_factorization, MAX_INIT_DRAWS};
pub(crate) use objective::Problem;
pub use objective::{lipschitz_bound, objective_value, Factor, LipschitzBound, LipschitzMode};
pub(crate) use steps::Alternation;
pub use steps::{step_prox_elastic, step_prox_l1, step_smooth};

/// Settings for [`am_dlm_solve`] and the single-step functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop when the absolute objective change between iterations falls below this.
    pub tol: f64,
    /// Fixed step for `D`; `None` uses the inverse Lipschitz bound.
    pub step_d: Option<f64>,
    /// Fixed step for `H`; `None` uses the inverse Lipschitz bound.
    pub step_h: Option<f64>,
    pub lipschitz_mode: LipschitzMode,
    /// Proximal steps per column (row) within one sweep.
    pub inner_prox_iters: usize,
    pub seed: u64,
    /// Minimize each factor fully before switching to the other.
    pub exact: bool,
    pub exact_inner_iters: usize,
    /// Use subgradient steps for non-smooth regularizers.
    pub subgradient: bool,
    /// Mean of the random initial entries.
    pub init_mean: f64,
    /// Standard deviation of the random initial entries; `None` means `1/sqrt(k)`.
    pub init_sd: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 50_000,
            tol: 1e-8,
            step_d: None,
            step_h: None,
            lipschitz_mode: LipschitzMode::Analytic,
            inner_prox_iters: 1,
            seed: 0,
            exact: false,
            exact_inner_iters: 100,
            subgradient: false,
            init_mean: 0.0,
            init_sd: None,
        }
    }
}

impl SolverConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid(format!("tol must be positive, got {}", self.tol)));
        }
        for step in [self.step_d, self.step_h].into_iter().flatten() {
            if !(step > 0.0 && step.is_finite()) {
                return Err(invalid(format!("step sizes must be positive, got {step}")));
            }
        }
        if self.inner_prox_iters == 0 {
            return Err(invalid("inner_prox_iters must be at least 1"));
        }
        if let Some(sd) = self.init_sd {
            if !(sd > 0.0 && sd.is_finite()) {
                return Err(invalid(format!("init_sd must be positive, got {sd}")));
            }
        }
        Ok(())
    }
}

/// Alternating minimization of the full objective from a random or given start.
///
/// Each outer iteration takes one step on `D` and then one on `H` (using the
/// new `D`); the step rule for each factor follows its regularizer. The
/// objective is recorded after every iteration.
pub fn am_dlm_solve(
    x: &Observations,
    spec: &ProblemSpec,
    config: &SolverConfig,
    init: Option<&Factorization>,
) -> Result<(Factorization, TrialReport)> {
    config.validate()?;
    let problem = Problem::new(spec, x)?;
    let start = match init {
        Some(f) => {
            if f.k() != spec.k {
                return Err(crate::error::shape(format!("init has k = {}, spec.k is {}", f.k(), spec.k)));
            }
            f.clone()
        }
        None => {
            let (d, t) = x.shape();
            let sd = config.init_sd.unwrap_or(1.0 / (spec.k as f64).sqrt());
            random_factorization(d, spec.k, t, config.init_mean, sd, config.seed)?
        }
    };
    let families = Alternation::families(spec, &problem, config)?;
    let mut state = Alternation::new(&problem, &start, config, families)?;

    let mut report = TrialReport::new(config.seed);
    let mut prev = state.objective();
    if !prev.is_finite() {
        return Err(DlmError::NonFinite(format!("initial objective is {prev}")));
    }
    report.objective_trace.push((0, prev));
    for it in 1..=config.max_iters {
        state.iterate(config);
        let obj = state.objective();
        if !obj.is_finite() {
            return Err(DlmError::NonFinite(format!("objective became {obj} at iteration {it}")));
        }
        report.objective_trace.push((it, obj));
        report.iterations = it;
        let change = (prev - obj).abs();
        prev = obj;
        if change < config.tol {
            report.converged = true;
            break;
        }
    }
    report.final_objective = prev;
    Ok((state.into_factorization()?, report))
}
