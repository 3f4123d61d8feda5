use serde::{Deserialize, Serialize};

use crate::certify::Certificate;

/// Per-run record produced by every solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub final_objective: f64,
    /// `(iteration, objective)` pairs; iteration 0 is the initial point.
    pub objective_trace: Vec<(usize, f64)>,
    pub iterations: usize,
    pub converged: bool,
    pub certificate: Option<Certificate>,
    pub seed: u64,
    /// Inner iteration counts of sub-solvers, one entry per outer step, when recorded.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inner_iterations: Vec<usize>,
    /// Step sizes used by stochastic solvers, one per processed sample.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub step_sizes: Vec<f64>,
    /// Number of accelerated step-size decreases.
    #[serde(default)]
    pub decrease_count: usize,
}

impl TrialReport {
    pub(crate) fn new(seed: u64) -> Self {
        Self {
            final_objective: f64::NAN,
            objective_trace: Vec::new(),
            iterations: 0,
            converged: false,
            certificate: None,
            seed,
            inner_iterations: Vec::new(),
            step_sizes: Vec::new(),
            decrease_count: 0,
        }
    }
}
