use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::batch::{am_dlm_solve, random_factorization, Problem, SolverConfig};
use crate::error::{invalid, DlmError, Result};
use crate::matrix::{DenseMatrix, Factorization, Observations};
use crate::model::regularizer::vector_value;
use crate::spec::{LossSpec, ProblemSpec, RegularizerSpec};

/// Penalty weights `rho` used by [`induced_reg_estimate`].
///
/// Stages run `start, start*factor, ...` up to `stop`; if the factorization is
/// still infeasible there, up to `extra_stages` further stages are added.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltySchedule {
    pub start: f64,
    pub factor: f64,
    pub stop: f64,
    pub extra_stages: usize,
    /// Relative feasibility tolerance on `||DH - Z||_F / ||Z||_F`.
    pub feasibility_tol: f64,
    /// Random starts; the smallest feasible estimate is returned.
    pub starts: usize,
    pub seed: u64,
    /// Iteration cap for each penalized solve.
    pub max_iters: usize,
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            factor: 10.0,
            stop: 1e6,
            extra_stages: 4,
            feasibility_tol: 1e-6,
            starts: 5,
            seed: 0,
            max_iters: 20_000,
        }
    }
}

impl PenaltySchedule {
    fn validate(&self) -> Result<()> {
        if !(self.start > 0.0 && self.factor > 1.0 && self.stop >= self.start && self.stop.is_finite()) {
            return Err(invalid("penalty schedule needs 0 < start <= stop and factor > 1"));
        }
        if !(self.feasibility_tol > 0.0) || self.starts == 0 || self.max_iters == 0 {
            return Err(invalid("feasibility_tol, starts and max_iters must be positive"));
        }
        Ok(())
    }

    fn stages(&self) -> Vec<f64> {
        let mut out = vec![self.start];
        let mut rho = self.start;
        while rho * self.factor <= self.stop * (1.0 + 1e-12) {
            rho *= self.factor;
            out.push(rho);
        }
        out
    }
}

fn reg_sum(reg_d: &RegularizerSpec, reg_h: &RegularizerSpec, d: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
    let dv: f64 = d.column_iter().map(|c| vector_value(reg_d, c.as_slice(), false)).sum();
    let hv: f64 = h.row_iter().map(|r| vector_value(reg_h, &r.iter().copied().collect::<Vec<_>>(), false)).sum();
    dv + hv
}

// For regularizers that are squares of norms the summed penalty over a
// rescaling D_i g, H_i / g is minimized at equal norms; applying that
// rescaling only lowers the penalty and leaves DH unchanged.
fn balance(reg_d: &RegularizerSpec, reg_h: &RegularizerSpec, d: &mut DMatrix<f64>, h: &mut DMatrix<f64>) {
    if !(reg_d.is_norm() && reg_h.is_norm()) {
        return;
    }
    for i in 0..d.ncols() {
        let fc = vector_value(reg_d, d.column(i).as_slice(), false).sqrt();
        let fr = vector_value(reg_h, &h.row(i).iter().copied().collect::<Vec<_>>(), false).sqrt();
        if fc > 0.0 && fr > 0.0 {
            let g = (fr / fc).sqrt();
            d.column_mut(i).scale_mut(g);
            h.row_mut(i).scale_mut(1.0 / g);
        }
    }
}

// Ridge alternating least squares, the exact block minimizer when both
// regularizers are squared l2.
fn ridge_als(z: &DMatrix<f64>, d: &mut DMatrix<f64>, h: &mut DMatrix<f64>, a: f64, iters: usize) {
    let k = d.ncols();
    let eye = DMatrix::<f64>::identity(k, k);
    let solve =
        |gram: DMatrix<f64>, rhs: DMatrix<f64>| -> Option<DMatrix<f64>> { gram.cholesky().map(|c| c.solve(&rhs)) };
    let mut prev = f64::INFINITY;
    for _ in 0..iters {
        match solve(&*h * h.transpose() + &eye * a, &*h * z.transpose()) {
            Some(dt) => *d = dt.transpose(),
            None => return,
        }
        match solve(d.transpose() * &*d + &eye * a, d.transpose() * z) {
            Some(hn) => *h = hn,
            None => return,
        }
        let obj = 0.5 * (z - &*d * &*h).norm_squared() + 0.5 * a * (d.norm_squared() + h.norm_squared());
        if (prev - obj).abs() <= 1e-15 * obj.max(f64::MIN_POSITIVE) {
            return;
        }
        prev = obj;
    }
}

fn one_start(
    z: &DMatrix<f64>,
    reg_d: &RegularizerSpec,
    reg_h: &RegularizerSpec,
    k: usize,
    schedule: &PenaltySchedule,
    seed: u64,
) -> Result<(Option<f64>, f64)> {
    let (rows, cols) = z.shape();
    let znorm = z.norm();
    let sd = (znorm / ((rows * k * cols) as f64).sqrt()).sqrt().max(1e-3);
    let start = random_factorization(rows, k, cols, 0.0, sd, seed)?;
    let (mut d, mut h) = (start.d().as_matrix().clone(), start.h().as_matrix().clone());
    let ridge = *reg_d == RegularizerSpec::SquaredL2 && *reg_h == RegularizerSpec::SquaredL2;
    let x: Observations = DenseMatrix::new(z.clone())?.into();
    let mut best_residual = f64::INFINITY;

    let mut stages = schedule.stages();
    let last = *stages.last().unwrap_or(&schedule.start);
    stages.extend((1..=schedule.extra_stages).map(|j| last * schedule.factor.powi(j as i32)));
    let regular = schedule.stages().len();
    for (stage, rho) in stages.into_iter().enumerate() {
        // rho ||DH - Z||^2 + R  is  (2 rho) times  1/2 ||Z - DH||^2 + (1 / (2 rho)) R
        let a = 1.0 / rho;
        if ridge {
            ridge_als(z, &mut d, &mut h, a, schedule.max_iters);
        } else {
            let spec = ProblemSpec {
                loss: LossSpec::HalfSquaredError,
                reg_d: reg_d.clone(),
                reg_h: reg_h.clone(),
                alpha: a,
                s: 1.0,
                k,
                averaged: false,
                unsquared_l1_d: false,
                unsquared_l1_h: false,
            };
            let cfg = SolverConfig {
                max_iters: schedule.max_iters,
                tol: 1e-15 * znorm.powi(2).max(1.0),
                ..SolverConfig::default()
            };
            let init = Factorization::from_parts(d.clone(), h.clone())?;
            let (fact, _) = am_dlm_solve(&x, &spec, &cfg, Some(&init))?;
            let (dn, hn) = fact.into_parts();
            d = dn.into_matrix();
            h = hn.into_matrix();
        }
        balance(reg_d, reg_h, &mut d, &mut h);
        let residual = (&d * &h - z).norm() / znorm;
        best_residual = best_residual.min(residual);
        if stage + 1 >= regular && residual <= schedule.feasibility_tol {
            return Ok((Some(reg_sum(reg_d, reg_h, &d, &h)), best_residual));
        }
    }
    Ok((None, best_residual))
}

/// Estimates the induced regularizer
/// `R_k(Z) = min_{DH = Z} sum_i f_c(D_:i)^2 + f_r(H_i:)^2` by a quadratic-penalty
/// homotopy in `rho`, warm-started across stages, taking the minimum over the
/// schedule's random starts.
pub fn induced_reg_estimate(
    z: &DenseMatrix,
    reg_d: &RegularizerSpec,
    reg_h: &RegularizerSpec,
    k: usize,
    schedule: &PenaltySchedule,
) -> Result<f64> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    schedule.validate()?;
    reg_d.validate()?;
    reg_h.validate()?;
    let zm = z.as_matrix();
    // validates dimension-dependent parameters such as weight matrices
    let probe = ProblemSpec {
        loss: LossSpec::HalfSquaredError,
        reg_d: reg_d.clone(),
        reg_h: reg_h.clone(),
        alpha: 1.0,
        s: 1.0,
        k,
        averaged: false,
        unsquared_l1_d: false,
        unsquared_l1_h: false,
    };
    let x: Observations = z.clone().into();
    Problem::new(&probe, &x)?.check(&DMatrix::zeros(zm.nrows(), k), &DMatrix::zeros(k, zm.ncols()))?;
    if zm.norm() == 0.0 {
        return Ok(0.0);
    }
    let mut best: Option<f64> = None;
    let mut best_residual = f64::INFINITY;
    for j in 0..schedule.starts {
        let (value, residual) = one_start(zm, reg_d, reg_h, k, schedule, schedule.seed.wrapping_add(j as u64))?;
        best_residual = best_residual.min(residual);
        if let Some(v) = value {
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best.ok_or(DlmError::Infeasible { best_residual })
}

/// Largest convexity gap `R(eta Z1 + (1 - eta) Z2) - eta R(Z1) - (1 - eta) R(Z2)`
/// of the estimated induced regularizer over `n_segments` random pairs of
/// standard normal matrices and `eta` in `{0.25, 0.5, 0.75}`.
pub fn convexity_probe(
    reg_d: &RegularizerSpec,
    reg_h: &RegularizerSpec,
    k: usize,
    dims: (usize, usize),
    n_segments: usize,
    seed: u64,
    schedule: &PenaltySchedule,
) -> Result<f64> {
    let (rows, cols) = dims;
    if rows == 0 || cols == 0 || n_segments == 0 {
        return Err(invalid("dims and n_segments must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || DMatrix::<f64>::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng));
    let estimate = |m: DMatrix<f64>| induced_reg_estimate(&DenseMatrix::new(m)?, reg_d, reg_h, k, schedule);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..n_segments {
        let (z1, z2) = (draw(), draw());
        let (r1, r2) = (estimate(z1.clone())?, estimate(z2.clone())?);
        for eta in [0.25, 0.5, 0.75] {
            let mid = estimate(&z1 * eta + &z2 * (1.0 - eta))?;
            worst = worst.max(mid - eta * r1 - (1.0 - eta) * r2);
        }
    }
    Ok(worst)
}
