use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, DlmError, Result};
use crate::matrix::DenseMatrix;
use crate::model::regularizer::{vector_grad, vector_value};
use crate::model::{
    prox_group_l2, prox_nonsmooth, prox_sql1_unchecked, sigma_max_sq, smooth_nu, CodeSolver, InnerConfig,
};
use crate::report::TrialReport;
use crate::spec::{ProblemSpec, RegularizerSpec};

use super::{column, epoch_order, full_objective, initial_dictionary, prepare, sample_matrix};

/// Floor on the statistics' forgetting weight.
pub const MIN_BETA: f64 = 0.01;

/// Forgetting weight `max(1/t, 0.01)` for step `t >= 1`.
pub fn online_beta(t: usize) -> f64 {
    (1.0 / t.max(1) as f64).max(MIN_BETA)
}

/// Settings for [`online_am_dlm`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OnlineConfig {
    pub epochs: usize,
    /// Dictionary sweeps stop when the relative change of `D` falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Samples between objective evaluations; `None` evaluates once per epoch.
    pub eval_every: Option<usize>,
    pub seed: u64,
    pub init_sd: Option<f64>,
    pub inner: InnerConfig,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            tol: 1e-6,
            max_sweeps: 100,
            eval_every: None,
            seed: 0,
            init_sd: None,
            inner: InnerConfig::default(),
        }
    }
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.max_sweeps == 0 || self.eval_every == Some(0) {
            return Err(invalid("epochs, max_sweeps and eval_every must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol must be positive"));
        }
        Ok(())
    }
}

/// Dictionary and the running code statistics `A = E[h h^T]`, `B = E[x h^T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineState {
    pub d: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Samples absorbed so far.
    pub t: usize,
}

impl OnlineState {
    pub fn new(d: &DenseMatrix) -> Self {
        let (rows, k) = d.shape();
        Self { d: d.as_matrix().clone(), a: DMatrix::zeros(k, k), b: DMatrix::zeros(rows, k), t: 0 }
    }

    /// Folds one sample and its code into the statistics.
    pub fn observe(&mut self, x: &[f64], h: &[f64]) -> Result<()> {
        if x.len() != self.b.nrows() || h.len() != self.a.nrows() {
            return Err(shape("sample or code length does not match the state"));
        }
        self.t += 1;
        let beta = online_beta(self.t);
        let (x, h) = (DVector::from_column_slice(x), DVector::from_column_slice(h));
        let k = h.len();
        for j in 0..k {
            for i in 0..k {
                // written symmetrically so A stays exactly symmetric
                self.a[(i, j)] = (1.0 - beta) * self.a[(i, j)] + beta * (h[i] * h[j]);
            }
        }
        self.b = &self.b * (1.0 - beta) + &x * h.transpose() * beta;
        Ok(())
    }

    /// Minimizes `1/2 tr(D^T D A) - tr(D^T B) + weight R(D)` from the current
    /// `D` by block-coordinate descent over columns, until the relative change
    /// of a sweep is below `tol` or `max_sweeps` sweeps ran. Returns the sweeps used.
    pub fn update_dictionary(
        &mut self,
        reg: &RegularizerSpec,
        weight: f64,
        unsquared: bool,
        tol: f64,
        max_sweeps: usize,
    ) -> Result<usize> {
        let kind = column_rule(reg, weight)?;
        for sweep in 1..=max_sweeps {
            let old = self.d.clone();
            match kind {
                Rule::Coupled => self.coupled_sweep(reg, weight),
                _ => {
                    for j in 0..self.d.ncols() {
                        self.update_column(j, kind, reg, weight, unsquared);
                    }
                }
            }
            if self.d.iter().any(|v| !v.is_finite()) {
                return Err(DlmError::NonFinite("dictionary update diverged".into()));
            }
            if (&self.d - &old).norm() <= tol * old.norm().max(f64::MIN_POSITIVE) {
                return Ok(sweep);
            }
        }
        Ok(max_sweeps)
    }

    fn update_column(&mut self, j: usize, rule: Rule, reg: &RegularizerSpec, w: f64, unsquared: bool) {
        let ajj = self.a[(j, j)];
        if ajj <= 1e-12 {
            // atom unused so far
            return;
        }
        // gradient of the surrogate in column j is D a_j - b_j
        let grad = &self.d * self.a.column(j) - self.b.column(j);
        let dj: Vec<f64> = self.d.column(j).iter().copied().collect();
        let new: Vec<f64> = match rule {
            Rule::Smooth(curv) => {
                let rg = if w == 0.0 { vec![0.0; dj.len()] } else { vector_grad(reg, &dj, unsquared) };
                let l = ajj + curv;
                dj.iter().zip(grad.iter()).zip(rg).map(|((d, g), r)| d - (g + w * r) / l).collect()
            }
            Rule::Prox => {
                let nw = 2.0 * smooth_nu(reg) * w;
                let l = ajj + nw;
                let mut u: Vec<f64> = dj.iter().zip(grad.iter()).map(|(d, g)| d - (g + nw * d) / l).collect();
                prox_nonsmooth(reg, &mut u, w / l, unsquared);
                u
            }
            Rule::Backtrack => {
                // smooth part of the column objective, up to a constant:
                // 1/2 ajj ||v||^2 - v^T c + w f(v), with c = ajj d_j - grad
                let c: Vec<f64> = dj.iter().zip(grad.iter()).map(|(d, g)| ajj * d - g).collect();
                let phi = |v: &[f64]| {
                    0.5 * ajj * v.iter().map(|x| x * x).sum::<f64>() - v.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>()
                        + w * vector_value(reg, v, unsquared)
                };
                let rg = vector_grad(reg, &dj, unsquared);
                let g: Vec<f64> = grad.iter().zip(rg).map(|(g, r)| g + w * r).collect();
                let f0 = phi(&dj);
                let mut l = ajj + 2.0 * w;
                let mut out = dj.clone();
                for _ in 0..60 {
                    let cand: Vec<f64> = dj.iter().zip(&g).map(|(d, g)| d - g / l).collect();
                    let gd: f64 = g.iter().zip(cand.iter().zip(&dj)).map(|(g, (a, b))| g * (a - b)).sum();
                    let sq: f64 = cand.iter().zip(&dj).map(|(a, b)| (a - b) * (a - b)).sum();
                    if phi(&cand) <= f0 + gd + 0.5 * l * sq {
                        out = cand;
                        break;
                    }
                    l *= 2.0;
                }
                out
            }
            Rule::Coupled => unreachable!("coupled rules update the whole matrix"),
        };
        for (r, v) in new.into_iter().enumerate() {
            self.d[(r, j)] = v;
        }
    }

    // proximal gradient on the whole surrogate with a row-group proximal map
    fn coupled_sweep(&mut self, reg: &RegularizerSpec, w: f64) {
        let l = sigma_max_sq_sym(&self.a).max(1e-12);
        let grad = &self.d * &self.a - &self.b;
        self.d -= grad / l;
        let c = w / l;
        for r in 0..self.d.nrows() {
            let mut u: Vec<f64> = self.d.row(r).iter().copied().collect();
            match reg {
                RegularizerSpec::CoupledRowsL2 => prox_group_l2(&mut u, c),
                _ => u = prox_sql1_unchecked(&u, c).z,
            }
            for (j, v) in u.into_iter().enumerate() {
                self.d[(r, j)] = v;
            }
        }
    }
}

fn sigma_max_sq_sym(a: &DMatrix<f64>) -> f64 {
    // A is PSD, so its largest eigenvalue is its spectral norm
    a.clone().symmetric_eigenvalues().max().max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Rule {
    /// Gradient step with the given regularizer curvature.
    Smooth(f64),
    Prox,
    Backtrack,
    Coupled,
}

fn column_rule(reg: &RegularizerSpec, w: f64) -> Result<Rule> {
    if w == 0.0 {
        return Ok(Rule::Smooth(0.0));
    }
    Ok(match reg {
        RegularizerSpec::SquaredL2 => Rule::Smooth(2.0 * w),
        RegularizerSpec::WeightedSquaredL2 { lambda } => Rule::Smooth(2.0 * w * sigma_max_sq(lambda.as_matrix())),
        RegularizerSpec::ElasticNetSq { nu } | RegularizerSpec::NonNormElasticNet { nu, .. } if *nu == 1.0 => {
            Rule::Smooth(2.0 * w)
        }
        RegularizerSpec::SquaredL1
        | RegularizerSpec::ElasticNetSq { .. }
        | RegularizerSpec::NonNormElasticNet { .. } => Rule::Prox,
        RegularizerSpec::PartitionedMax { inner, .. } if **inner == RegularizerSpec::SquaredL2 => Rule::Prox,
        RegularizerSpec::PartitionedMax { .. } => {
            return Err(DlmError::Unsupported(
                "partitioned max has a proximal step only for a squared l2 inner norm".into(),
            ))
        }
        RegularizerSpec::PseudoHuberSq { .. } | RegularizerSpec::SmoothedElasticNetSq { .. } => Rule::Backtrack,
        RegularizerSpec::CoupledRowsL1Sq | RegularizerSpec::CoupledRowsL2 => Rule::Coupled,
    })
}

/// Online alternating minimization: per sample, solve its code for the
/// current dictionary, fold it into the statistics with weight
/// `max(1/t, 0.01)` and re-minimize the quadratic surrogate over `D` from a
/// warm start. Requires a least-squares loss.
///
/// The report records the number of dictionary sweeps per sample in
/// `inner_iterations`.
pub fn online_am_dlm(
    samples: &[Vec<f64>],
    spec: &ProblemSpec,
    config: &OnlineConfig,
    init: Option<&DenseMatrix>,
) -> Result<(DenseMatrix, TrialReport)> {
    config.validate()?;
    if !spec.loss.is_least_squares() {
        return Err(DlmError::Unsupported(format!(
            "sufficient statistics need a least-squares loss, got {:?}",
            spec.loss
        )));
    }
    let spec = prepare(spec)?;
    let x = sample_matrix(samples)?;
    let (dim, n) = x.shape();
    let d0 = initial_dictionary(init, dim, n, &spec, config.init_sd, config.seed)?;
    let mut state = OnlineState::new(&DenseMatrix::new(d0)?);
    column_rule(&spec.reg_d, spec.weight_d())?;
    let eval_every = config.eval_every.unwrap_or(n);

    let mut report = TrialReport::new(config.seed);
    let mut last = full_objective(&state.d, &x, &spec)?;
    report.objective_trace.push((0, last));
    for epoch in 0..config.epochs {
        for j in epoch_order(config.seed, epoch, n) {
            let xj = column(&x, j);
            let h = CodeSolver::new(&state.d, &spec, &config.inner)?.solve(&xj, None);
            state.observe(xj.as_slice(), h.as_slice())?;
            let sweeps = state.update_dictionary(
                &spec.reg_d,
                spec.weight_d(),
                spec.unsquared_l1_d,
                config.tol,
                config.max_sweeps,
            )?;
            report.inner_iterations.push(sweeps);
            if state.t.is_multiple_of(eval_every) {
                last = full_objective(&state.d, &x, &spec)?;
                report.objective_trace.push((state.t, last));
            }
        }
    }
    if report.objective_trace.last().map(|p| p.0) != Some(state.t) {
        last = full_objective(&state.d, &x, &spec)?;
        report.objective_trace.push((state.t, last));
    }
    report.final_objective = last;
    report.iterations = state.t;
    report.converged = true;
    Ok((DenseMatrix::new(state.d)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_floor() {
        assert_eq!(online_beta(1), 1.0);
        assert_eq!(online_beta(50), 0.02);
        assert_eq!(online_beta(200), 0.01);
    }

    #[test]
    fn statistics_stay_symmetric() {
        let mut s = OnlineState::new(&DenseMatrix::zeros(3, 2));
        s.observe(&[1.0, 2.0, 3.0], &[0.3, -0.7]).unwrap();
        s.observe(&[0.0, 1.0, 0.0], &[1.1, 0.2]).unwrap();
        assert_eq!(s.a, s.a.transpose());
        // beta_1 = 1 replaces the zero start, beta_2 = 1/2 averages
        assert!((s.a[(0, 0)] - 0.5 * (0.09 + 1.21)).abs() < 1e-15);
    }

    #[test]
    fn ridge_column_update_is_exact() {
        let mut s = OnlineState::new(&DenseMatrix::zeros(2, 1));
        s.observe(&[2.0, 4.0], &[1.0]).unwrap();
        // minimize 1/2 ||d||^2 - d^T [2, 4] + w ||d||^2 with w = 0.5
        s.update_dictionary(&RegularizerSpec::SquaredL2, 0.5, false, 1e-12, 100).unwrap();
        assert!((s.d[(0, 0)] - 1.0).abs() < 1e-15 && (s.d[(1, 0)] - 2.0).abs() < 1e-15);
    }
}
