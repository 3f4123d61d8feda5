use serde::{Deserialize, Serialize};

use crate::error::{invalid, DlmError, Result};
use crate::matrix::DenseMatrix;
use crate::model::regularizer::matrix_grad;
use crate::model::{sample_loss, CodeSolver, InnerConfig, InnerMode};
use crate::report::TrialReport;
use crate::spec::{Orientation, ProblemSpec};

use super::schedule::{accelerated_step, schedule_step_size, Schedule, SgdState};
use super::{column, epoch_order, full_objective, initial_dictionary, prepare, sample_matrix};

/// Settings for [`sgd_am_dlm`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub schedule: Schedule,
    pub eta0: f64,
    /// Weight on the previous dictionary change.
    pub momentum: f64,
    /// Hold the step while consecutive gradients agree; see [`accelerated_step`].
    pub accelerate: bool,
    pub epochs: usize,
    /// Samples between objective evaluations; `None` evaluates once per epoch.
    pub eval_every: Option<usize>,
    /// Stop when the relative change between evaluations falls below this.
    pub tol: f64,
    pub seed: u64,
    /// Standard deviation of the random initial dictionary; `None` means `1/sqrt(k)`.
    pub init_sd: Option<f64>,
    /// Per-sample code solve.
    pub inner: InnerConfig,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            schedule: Schedule::Type2,
            eta0: 0.5,
            momentum: 0.01,
            accelerate: false,
            epochs: 30,
            eval_every: None,
            tol: 0.0,
            seed: 0,
            init_sd: None,
            inner: InnerConfig { mode: InnerMode::Subgradient, ..InnerConfig::default() },
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(invalid(format!("eta0 must be positive, got {}", self.eta0)));
        }
        if !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return Err(invalid(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.epochs == 0 || self.eval_every == Some(0) {
            return Err(invalid("epochs and eval_every must be positive"));
        }
        if !(self.tol >= 0.0) {
            return Err(invalid("tol must be non-negative"));
        }
        Ok(())
    }
}

/// Stochastic alternating minimization: per sample, solve its code for the
/// current dictionary, then take one (sub)gradient step on the dictionary,
/// `D <- D - eta_t (grad l_t + grad R_D) + momentum (D_prev - D_prev2)`.
///
/// Samples are reshuffled every epoch. Returns the final dictionary and a
/// report whose trace holds the averaged objective against samples processed.
pub fn sgd_am_dlm(
    samples: &[Vec<f64>],
    spec: &ProblemSpec,
    config: &SgdConfig,
    init: Option<&DenseMatrix>,
) -> Result<(DenseMatrix, TrialReport)> {
    config.validate()?;
    let spec = prepare(spec)?;
    let x = sample_matrix(samples)?;
    let (dim, n) = x.shape();
    let d0 = initial_dictionary(init, dim, n, &spec, config.init_sd, config.seed)?;
    let mut state = SgdState::new(&DenseMatrix::new(d0)?, config.eta0)?;
    let w_d = spec.weight_d();
    let eval_every = config.eval_every.unwrap_or(n);

    let mut report = TrialReport::new(config.seed);
    let mut last = full_objective(&state.d, &x, &spec)?;
    report.objective_trace.push((0, last));
    let mut step = 0usize;
    'epochs: for epoch in 0..config.epochs {
        for j in epoch_order(config.seed, epoch, n) {
            step += 1;
            state.t = step;
            let xj = column(&x, j);
            let h = CodeSolver::new(&state.d, &spec, &config.inner)?.solve(&xj, None);
            let (_, gz) = sample_loss(&spec.loss, &(&state.d * &h), &xj);
            let grad =
                gz * h.transpose() + matrix_grad(&spec.reg_d, &state.d, Orientation::Columns, w_d, spec.unsquared_l1_d);
            let eta = if config.accelerate {
                accelerated_step(&mut state, &DenseMatrix::new(grad.clone())?, config.schedule, config.eta0)?
            } else {
                schedule_step_size(config.schedule, config.eta0, step)?
            };
            let next = &state.d - &grad * eta + (&state.d - &state.d_prev) * config.momentum;
            if next.iter().any(|v| !v.is_finite()) {
                return Err(DlmError::NonFinite(format!("dictionary diverged at step {step}")));
            }
            state.d_prev = std::mem::replace(&mut state.d, next);
            state.grad_prev = grad;
            report.step_sizes.push(eta);
            if step.is_multiple_of(eval_every) {
                let obj = full_objective(&state.d, &x, &spec)?;
                report.objective_trace.push((step, obj));
                let change = (last - obj).abs() / obj.abs().max(f64::MIN_POSITIVE);
                last = obj;
                if change < config.tol {
                    report.converged = true;
                    break 'epochs;
                }
            }
        }
    }
    if report.objective_trace.last().map(|p| p.0) != Some(step) {
        last = full_objective(&state.d, &x, &spec)?;
        report.objective_trace.push((step, last));
    }
    report.final_objective = last;
    report.iterations = step;
    report.decrease_count = state.decrease_count;
    Ok((DenseMatrix::new(state.d)?, report))
}
