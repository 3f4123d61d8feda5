use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{shape, Result};
use crate::matrix::{DenseMatrix, Factorization, Observations};
use crate::model::regularizer::{check_dims, matrix_grad, matrix_value};
use crate::model::{sigma_max_sq, BoundLoss};
use crate::spec::{Orientation, ProblemSpec, RegularizerSpec};

/// A validated problem instance: spec, data and the transposed views used for
/// code (`H`) updates.
pub(crate) struct Problem<'a> {
    pub spec: &'a ProblemSpec,
    pub x: &'a DMatrix<f64>,
    pub mask: Option<&'a DMatrix<f64>>,
    pub xt: DMatrix<f64>,
    pub mask_t: Option<DMatrix<f64>>,
    pub scale: f64,
    pub w_d: f64,
    pub w_h: f64,
}

impl<'a> Problem<'a> {
    pub fn new(spec: &'a ProblemSpec, x: &'a Observations) -> Result<Self> {
        spec.validate()?;
        let loss = BoundLoss::new(&spec.loss, x, spec.averaged)?;
        let t = x.samples();
        Ok(Self {
            spec,
            x: loss.x,
            mask: loss.mask,
            xt: loss.x.transpose(),
            mask_t: loss.mask.map(|m| m.transpose()),
            scale: loss.scale,
            w_d: spec.weight_d(),
            w_h: spec.weight_h(t),
        })
    }

    pub fn check(&self, d: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<()> {
        if d.ncols() != h.nrows() {
            return Err(shape("dictionary and codes disagree on k"));
        }
        if d.nrows() != self.x.nrows() || h.ncols() != self.x.ncols() {
            return Err(shape(format!(
                "factors give a {}x{} product, data is {}x{}",
                d.nrows(),
                h.ncols(),
                self.x.nrows(),
                self.x.ncols()
            )));
        }
        check_dims(&self.spec.reg_d, d, Orientation::Columns)?;
        check_dims(&self.spec.reg_h, h, Orientation::Rows)
    }

    /// Loss bound to `X` (for `Z = D H`).
    pub fn loss(&self) -> BoundLoss<'_> {
        BoundLoss { spec: &self.spec.loss, x: self.x, mask: self.mask, scale: self.scale }
    }

    /// Loss bound to `X^T` (for `Z^T = H^T D^T`).
    pub fn loss_t(&self) -> BoundLoss<'_> {
        BoundLoss { spec: &self.spec.loss, x: &self.xt, mask: self.mask_t.as_ref(), scale: self.scale }
    }

    pub fn reg_d_value(&self, d: &DMatrix<f64>) -> f64 {
        matrix_value(&self.spec.reg_d, d, Orientation::Columns, self.w_d, self.spec.unsquared_l1_d)
    }

    pub fn reg_h_value(&self, h: &DMatrix<f64>) -> f64 {
        matrix_value(&self.spec.reg_h, h, Orientation::Rows, self.w_h, self.spec.unsquared_l1_h)
    }

    pub fn objective_with_z(&self, d: &DMatrix<f64>, h: &DMatrix<f64>, z: &DMatrix<f64>) -> f64 {
        self.loss().value(z) + self.reg_d_value(d) + self.reg_h_value(h)
    }

    pub fn objective(&self, d: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
        self.objective_with_z(d, h, &(d * h))
    }

    /// Gradients (subgradients for non-smooth regularizers) in `D` and `H`.
    pub fn gradients(&self, d: &DMatrix<f64>, h: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let g = self.loss().gradient(&(d * h));
        let spec = self.spec;
        let gd = &g * h.transpose() + matrix_grad(&spec.reg_d, d, Orientation::Columns, self.w_d, spec.unsquared_l1_d);
        let gh = d.transpose() * &g + matrix_grad(&spec.reg_h, h, Orientation::Rows, self.w_h, spec.unsquared_l1_h);
        (gd, gh)
    }
}

/// `L(DH) + (alpha/2) R_D(D) + (alpha/(2 s^2)) R_H(H)`, with the loss and the
/// `H` term averaged over samples when `spec.averaged`.
pub fn objective_value(fact: &Factorization, x: &Observations, spec: &ProblemSpec) -> Result<f64> {
    let problem = Problem::new(spec, x)?;
    let (d, h) = (fact.d().as_matrix(), fact.h().as_matrix());
    problem.check(d, h)?;
    Ok(problem.objective(d, h))
}

/// How the spectral norm in full-matrix Lipschitz bounds is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LipschitzMode {
    /// Exact top eigenvalue of the Gram matrix.
    #[default]
    Analytic,
    /// Power iteration on the Gram matrix, inflated slightly to stay an upper bound.
    PowerIteration,
    /// Analytic full-matrix bounds, and the looser `2 (c ||f_i||_1^2 + 2 nu w)`
    /// majorant for per-column proximal steps.
    L1Majorant,
}

/// The factor being updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    D,
    H,
}

/// A Lipschitz bound; `floored` marks a zero `fixed` matrix replaced by `1e-12`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzBound {
    pub value: f64,
    pub floored: bool,
}

pub(crate) const LIPSCHITZ_FLOOR: f64 = 1e-12;

pub(crate) fn spectral_sq(f: &DMatrix<f64>, mode: LipschitzMode) -> f64 {
    match mode {
        LipschitzMode::Analytic | LipschitzMode::L1Majorant => sigma_max_sq(f),
        LipschitzMode::PowerIteration => {
            let gram = if f.nrows() <= f.ncols() { f * f.transpose() } else { f.transpose() * f };
            let n = gram.nrows();
            let mut v = nalgebra::DVector::from_fn(n, |i, _| 1.0 + i as f64 / n as f64);
            let mut lambda = 0.0;
            for _ in 0..1000 {
                let w = &gram * &v;
                let norm = w.norm();
                if norm == 0.0 {
                    return 0.0;
                }
                let next = v.dot(&w) / v.norm_squared();
                v = w / norm;
                let done = (next - lambda).abs() <= 1e-12 * next;
                lambda = next;
                if done {
                    break;
                }
            }
            lambda * (1.0 + 1e-6)
        }
    }
}

/// Lipschitz bound for the loss gradient in one factor given the other.
///
/// Without `column_index` this is `c * sigma_max(fixed)^2` where `c` is the
/// loss curvature times its averaging scale. With `column_index = i` it is
/// the per-column elastic-net majorant `2 (c ||fixed_i||_1^2 + 2 nu w)`, where
/// `fixed_i` is row `i` of `H` (for `D` updates) or column `i` of `D` (for `H`
/// updates) and `w` the regularizer weight of the updated factor.
pub fn lipschitz_bound(
    spec: &ProblemSpec,
    x: &Observations,
    fixed: &DenseMatrix,
    which: Factor,
    column_index: Option<usize>,
    mode: LipschitzMode,
) -> Result<LipschitzBound> {
    let problem = Problem::new(spec, x)?;
    let c = spec.loss.curvature() * problem.scale;
    let f = fixed.as_matrix();
    let raw = match column_index {
        None => c * spectral_sq(f, mode),
        Some(i) => {
            let (vector, w, reg) = match which {
                Factor::D if i < f.nrows() => (f.row(i).iter().copied().collect::<Vec<_>>(), problem.w_d, &spec.reg_d),
                Factor::H if i < f.ncols() => (f.column(i).iter().copied().collect(), problem.w_h, &spec.reg_h),
                _ => return Err(shape(format!("index {i} is out of range for a {:?} matrix", f.shape()))),
            };
            let nu = match reg {
                RegularizerSpec::ElasticNetSq { nu } | RegularizerSpec::NonNormElasticNet { nu, .. } => *nu,
                RegularizerSpec::SquaredL2 => 1.0,
                _ => 0.0,
            };
            let l1: f64 = vector.iter().map(|v| v.abs()).sum();
            2.0 * (c * l1 * l1 + 2.0 * nu * w)
        }
    };
    if raw > 0.0 {
        Ok(LipschitzBound { value: raw, floored: false })
    } else {
        Ok(LipschitzBound { value: LIPSCHITZ_FLOOR, floored: true })
    }
}
