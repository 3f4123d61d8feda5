//! Per-sample code solves `min_h L_x(Dh, x) + (alpha / (2 s^2)) R_h(h)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{shape, DlmError, Result};
use crate::matrix::DenseMatrix;
use crate::spec::{LossSpec, ProblemSpec, RegularizerSpec};

use super::prox::shrink;

/// How non-smooth parts of the per-sample penalty are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InnerMode {
    /// Accelerated proximal gradient.
    #[default]
    Prox,
    /// Subgradient descent with a `1/sqrt(t)` step decay.
    Subgradient,
}

/// Settings for [`solve_h_given_d`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerConfig {
    /// Stopping tolerance on the (prox-)gradient norm.
    pub tol: f64,
    pub max_iters: usize,
    pub mode: InnerMode,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_iters: 20_000, mode: InnerMode::Prox }
    }
}

/// The column-decoupled `H` penalty `l2 ||h||^2 + l1 ||h||_1 + huber sum_i phi_mu(h_i)`,
/// already multiplied by the per-sample weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SamplePenalty {
    pub l2: f64,
    pub l1: f64,
    pub huber: f64,
    pub mu: f64,
}

impl SamplePenalty {
    pub fn from_spec(spec: &ProblemSpec) -> Result<Self> {
        let w = spec.weight_h_sample();
        let unsupported = |why: &str| {
            Err(DlmError::Unsupported(format!("{:?} on H does not decouple across samples: {why}", spec.reg_h)))
        };
        let zero = Self { l2: 0.0, l1: 0.0, huber: 0.0, mu: 1.0 };
        match &spec.reg_h {
            RegularizerSpec::SquaredL2 => Ok(Self { l2: w, ..zero }),
            RegularizerSpec::ElasticNetSq { nu } if *nu == 1.0 => Ok(Self { l2: w, ..zero }),
            RegularizerSpec::SquaredL1 if spec.unsquared_l1_h => Ok(Self { l1: w, ..zero }),
            RegularizerSpec::ElasticNetSq { nu } if spec.unsquared_l1_h => {
                Ok(Self { l2: w * nu, l1: w * (1.0 - nu), ..zero })
            }
            RegularizerSpec::PseudoHuberSq { mu } if spec.unsquared_l1_h => Ok(Self { huber: w, mu: *mu, ..zero }),
            RegularizerSpec::SmoothedElasticNetSq { nu, mu } if spec.unsquared_l1_h => {
                Ok(Self { l2: w * nu, huber: w * (1.0 - nu), mu: *mu, ..zero })
            }
            RegularizerSpec::SquaredL1
            | RegularizerSpec::ElasticNetSq { .. }
            | RegularizerSpec::PseudoHuberSq { .. }
            | RegularizerSpec::SmoothedElasticNetSq { .. } => {
                unsupported("the squared row penalty couples samples; use the unsquared l1 mode")
            }
            _ => unsupported("the row penalty couples samples"),
        }
    }

    pub fn value(&self, h: &[f64]) -> f64 {
        let mut v = 0.0;
        for x in h {
            v += self.l2 * x * x + self.l1 * x.abs();
            if self.huber != 0.0 {
                v += self.huber * x * x / ((self.mu * self.mu + x * x).sqrt() + self.mu);
            }
        }
        v
    }

    fn smooth_grad(&self, h: &DVector<f64>) -> DVector<f64> {
        h.map(|x| 2.0 * self.l2 * x + self.huber * x / (self.mu * self.mu + x * x).sqrt())
    }

    fn smooth_lipschitz(&self) -> f64 {
        2.0 * self.l2 + self.huber / self.mu
    }
}

/// Per-sample loss (unaveraged) and its gradient in `z = Dh`.
pub(crate) fn sample_loss(loss: &LossSpec, z: &DVector<f64>, x: &DVector<f64>) -> (f64, DVector<f64>) {
    match loss {
        LossSpec::HalfSquaredError | LossSpec::MaskedHalfSquaredError => {
            let r = z - x;
            (0.5 * r.norm_squared(), r)
        }
        LossSpec::CrossEntropySigmoid => {
            let v = z.iter().zip(x.iter()).map(|(z, x)| z.max(0.0) + (-z.abs()).exp().ln_1p() - x * z).sum();
            let g = z.zip_map(x, |z, x| 1.0 / (1.0 + (-z).exp()) - x);
            (v, g)
        }
        LossSpec::RobustHalfSquaredError { alpha_s } => {
            let a = *alpha_s;
            let v = z
                .iter()
                .zip(x.iter())
                .map(|(z, x)| {
                    let r = (x - z).abs();
                    if r <= a {
                        0.5 * r * r
                    } else {
                        a * r - 0.5 * a * a
                    }
                })
                .sum();
            (v, z.zip_map(x, |z, x| -(x - z).clamp(-a, a)))
        }
    }
}

/// Exact symmetric top eigenvalue of `D^T D`, i.e. `sigma_max(D)^2`.
pub(crate) fn sigma_max_sq(d: &DMatrix<f64>) -> f64 {
    let gram = if d.nrows() >= d.ncols() { d.transpose() * d } else { d * d.transpose() };
    gram.symmetric_eigenvalues().iter().cloned().fold(0.0, f64::max)
}

/// Solver for many samples sharing one dictionary.
pub(crate) struct CodeSolver<'a> {
    d: &'a DMatrix<f64>,
    loss: &'a LossSpec,
    pen: SamplePenalty,
    cfg: &'a InnerConfig,
    lipschitz: f64,
    ridge: Option<RidgeSolve>,
}

enum RidgeSolve {
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Svd(nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl<'a> CodeSolver<'a> {
    pub fn new(d: &'a DMatrix<f64>, spec: &'a ProblemSpec, cfg: &'a InnerConfig) -> Result<Self> {
        let pen = SamplePenalty::from_spec(spec)?;
        let lipschitz = (spec.loss.curvature() * sigma_max_sq(d) + pen.smooth_lipschitz()).max(1e-12);
        let ridge = if spec.loss.is_least_squares() && pen.l1 == 0.0 && pen.huber == 0.0 {
            let mut gram = d.transpose() * d;
            for i in 0..gram.nrows() {
                gram[(i, i)] += 2.0 * pen.l2;
            }
            Some(match gram.clone().cholesky() {
                Some(c) if pen.l2 > 0.0 => RidgeSolve::Cholesky(c),
                _ => RidgeSolve::Svd(d.clone().svd(true, true)),
            })
        } else {
            None
        };
        Ok(Self { d, loss: &spec.loss, pen, cfg, lipschitz, ridge })
    }

    /// Per-sample objective at `h`.
    pub fn objective(&self, h: &DVector<f64>, x: &DVector<f64>) -> f64 {
        sample_loss(self.loss, &(self.d * h), x).0 + self.pen.value(h.as_slice())
    }

    pub fn solve(&self, x: &DVector<f64>, warm: Option<&DVector<f64>>) -> DVector<f64> {
        if let Some(r) = &self.ridge {
            return match r {
                RidgeSolve::Cholesky(c) => c.solve(&(self.d.transpose() * x)),
                // minimum-norm least squares when unregularized and rank deficient
                RidgeSolve::Svd(svd) => svd.solve(x, 1e-12).expect("svd has both factors"),
            };
        }
        let k = self.d.ncols();
        let h0 = warm.cloned().unwrap_or_else(|| DVector::zeros(k));
        match self.cfg.mode {
            InnerMode::Prox => self.solve_prox(x, h0),
            InnerMode::Subgradient if self.pen.l1 > 0.0 => self.solve_subgradient(x, h0),
            InnerMode::Subgradient => self.solve_prox(x, h0),
        }
    }

    fn smooth_grad(&self, h: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        let (_, gz) = sample_loss(self.loss, &(self.d * h), x);
        self.d.transpose() * gz + self.pen.smooth_grad(h)
    }

    fn solve_prox(&self, x: &DVector<f64>, h0: DVector<f64>) -> DVector<f64> {
        let step = 1.0 / self.lipschitz;
        let tau = self.pen.l1 * step;
        let mut h = h0.clone();
        let mut y = h0;
        let mut t = 1.0f64;
        for _ in 0..self.cfg.max_iters {
            let g = self.smooth_grad(&y, x);
            let next = (&y - g * step).map(|v| shrink(v, tau));
            // gradient mapping norm at y
            let mapping = (&y - &next).amax() * self.lipschitz;
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let momentum = (t - 1.0) / t_next;
            // restart when the step goes uphill relative to the previous iterate
            let restart = (&y - &next).dot(&(&next - &h)) > 0.0;
            let prev = std::mem::replace(&mut h, next);
            if mapping <= self.cfg.tol {
                break;
            }
            if restart {
                t = 1.0;
                y = h.clone();
            } else {
                y = &h + (&h - prev) * momentum;
                t = t_next;
            }
        }
        h
    }

    fn solve_subgradient(&self, x: &DVector<f64>, h0: DVector<f64>) -> DVector<f64> {
        let mut h = h0;
        let mut best = h.clone();
        let mut best_obj = self.objective(&h, x);
        for t in 1..=self.cfg.max_iters {
            let mut g = self.smooth_grad(&h, x);
            for (gi, hi) in g.iter_mut().zip(h.iter()) {
                *gi += self.pen.l1 * super::regularizer::sign(*hi);
            }
            if g.amax() <= self.cfg.tol {
                break;
            }
            h -= g * (1.0 / (self.lipschitz * (t as f64).sqrt()));
            let obj = self.objective(&h, x);
            if obj < best_obj {
                best_obj = obj;
                best.copy_from(&h);
            }
        }
        best
    }

    /// Solves every column of `x`.
    pub fn solve_all(&self, x: &DMatrix<f64>, warm: Option<&DMatrix<f64>>) -> DMatrix<f64> {
        if let Some(RidgeSolve::Cholesky(c)) = &self.ridge {
            return c.solve(&(self.d.transpose() * x));
        }
        let mut h = DMatrix::zeros(self.d.ncols(), x.ncols());
        for j in 0..x.ncols() {
            let xj = x.column(j).into_owned();
            let w = warm.map(|w| w.column(j).into_owned());
            h.set_column(j, &self.solve(&xj, w.as_ref()));
        }
        h
    }
}

/// Optimal code for one sample under a fixed dictionary.
pub fn solve_h_given_d(d: &DenseMatrix, x: &[f64], spec: &ProblemSpec, config: &InnerConfig) -> Result<Vec<f64>> {
    spec.validate()?;
    if d.cols() != spec.k {
        return Err(shape(format!("dictionary has {} columns, spec.k is {}", d.cols(), spec.k)));
    }
    if x.len() != d.rows() {
        return Err(shape(format!("sample has length {}, dictionary has {} rows", x.len(), d.rows())));
    }
    let solver = CodeSolver::new(d.as_matrix(), spec, config)?;
    let h = solver.solve(&DVector::from_column_slice(x), None);
    if h.iter().any(|v| !v.is_finite()) {
        return Err(DlmError::NonFinite("code solve diverged".into()));
    }
    Ok(h.as_slice().to_vec())
}
