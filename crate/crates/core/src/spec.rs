//! Problem specifications: losses, factor regularizers and weights.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::matrix::DenseMatrix;

/// Whether a regularizer is applied per column (dictionary) or per row (codes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Columns,
    Rows,
}

/// Positive diagonal weights for the non-norm elastic net.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagWeights {
    /// All ones.
    Unit,
    /// `diag(1, 2, ..., n)`.
    Ramp,
    Explicit(Vec<f64>),
}

impl DiagWeights {
    pub fn weight(&self, i: usize) -> f64 {
        match self {
            DiagWeights::Unit => 1.0,
            DiagWeights::Ramp => (i + 1) as f64,
            DiagWeights::Explicit(w) => w[i],
        }
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        match self {
            DiagWeights::Explicit(w) if w.len() != n => {
                Err(crate::error::shape(format!("diagonal weights have length {}, vectors have length {n}", w.len())))
            }
            _ => Ok(()),
        }
    }
}

/// Regularizer applied to each column of `D` or each row of `H`.
///
/// Norm kinds contribute `f(v)^2` per vector. `CoupledRows*` act on whole rows
/// of the matrix and `NonNormElasticNet` has a non-convex `f`; those three are
/// baselines outside the induced family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegularizerSpec {
    SquaredL2,
    SquaredL1,
    ElasticNetSq {
        nu: f64,
    },
    PseudoHuberSq {
        mu: f64,
    },
    /// `nu ||v||^2 + (1 - nu) (sum_i sqrt(mu^2 + v_i^2) - mu)^2`.
    SmoothedElasticNetSq {
        nu: f64,
        mu: f64,
    },
    WeightedSquaredL2 {
        lambda: DenseMatrix,
    },
    /// `nu ||v||^2 + (1 - nu) ||diag(lambda) v||_1`.
    NonNormElasticNet {
        nu: f64,
        lambda: DiagWeights,
    },
    CoupledRowsL1Sq,
    CoupledRowsL2,
    /// `max(f^2(v_top), f^2(v_bottom))` with the vector split at index `split`.
    PartitionedMax {
        split: usize,
        inner: Box<RegularizerSpec>,
    },
}

impl RegularizerSpec {
    pub fn validate(&self) -> Result<()> {
        let check_nu = |nu: f64| {
            if (0.0..=1.0).contains(&nu) {
                Ok(())
            } else {
                Err(invalid(format!("nu must lie in [0, 1], got {nu}")))
            }
        };
        let check_mu = |mu: f64| {
            if mu > 0.0 && mu.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("mu must be positive, got {mu}")))
            }
        };
        match self {
            RegularizerSpec::ElasticNetSq { nu } => check_nu(*nu),
            RegularizerSpec::PseudoHuberSq { mu } => check_mu(*mu),
            RegularizerSpec::SmoothedElasticNetSq { nu, mu } => {
                check_nu(*nu)?;
                check_mu(*mu)
            }
            RegularizerSpec::WeightedSquaredL2 { lambda } => {
                if lambda.rows() != lambda.cols() {
                    return Err(invalid("weight matrix must be square"));
                }
                if lambda.as_matrix().clone().try_inverse().is_none() {
                    return Err(invalid("weight matrix must be invertible"));
                }
                Ok(())
            }
            RegularizerSpec::NonNormElasticNet { nu, lambda } => {
                check_nu(*nu)?;
                if let DiagWeights::Explicit(w) = lambda {
                    if w.is_empty() || w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                        return Err(invalid("diagonal weights must be positive"));
                    }
                }
                Ok(())
            }
            RegularizerSpec::PartitionedMax { inner, .. } => match **inner {
                RegularizerSpec::SquaredL2 | RegularizerSpec::SquaredL1 | RegularizerSpec::ElasticNetSq { .. } => {
                    inner.validate()
                }
                _ => Err(invalid("partitioned max requires a norm-type inner regularizer")),
            },
            _ => Ok(()),
        }
    }

    /// Differentiable everywhere (as a function of the whole matrix).
    pub fn is_smooth(&self) -> bool {
        matches!(
            self,
            RegularizerSpec::SquaredL2
                | RegularizerSpec::PseudoHuberSq { .. }
                | RegularizerSpec::SmoothedElasticNetSq { .. }
                | RegularizerSpec::WeightedSquaredL2 { .. }
        ) || matches!(self, RegularizerSpec::ElasticNetSq { nu } if *nu == 1.0)
            || matches!(self, RegularizerSpec::NonNormElasticNet { nu, .. } if *nu == 1.0)
    }

    /// Separable into one term per column (or row) of the regularized matrix.
    pub fn is_separable(&self) -> bool {
        !matches!(self, RegularizerSpec::CoupledRowsL1Sq | RegularizerSpec::CoupledRowsL2)
    }

    /// Baselines outside the induced family.
    pub fn is_non_induced(&self) -> bool {
        matches!(
            self,
            RegularizerSpec::CoupledRowsL1Sq
                | RegularizerSpec::CoupledRowsL2
                | RegularizerSpec::NonNormElasticNet { .. }
        )
    }

    /// `f` is a norm, so factor rebalancing is defined.
    pub fn is_norm(&self) -> bool {
        matches!(
            self,
            RegularizerSpec::SquaredL2
                | RegularizerSpec::SquaredL1
                | RegularizerSpec::ElasticNetSq { .. }
                | RegularizerSpec::WeightedSquaredL2 { .. }
        )
    }
}

/// Loss matching the transfer function between `Z = DH` and the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    HalfSquaredError,
    CrossEntropySigmoid,
    MaskedHalfSquaredError,
    /// Half squared error after an l1-penalized sparse outlier term with weight `alpha_s`.
    RobustHalfSquaredError {
        alpha_s: f64,
    },
}

impl LossSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            LossSpec::RobustHalfSquaredError { alpha_s } if !(*alpha_s > 0.0 && alpha_s.is_finite()) => {
                Err(invalid(format!("alpha_s must be positive, got {alpha_s}")))
            }
            _ => Ok(()),
        }
    }

    /// Belongs to the least-squares family (sufficient statistics apply).
    pub fn is_least_squares(&self) -> bool {
        matches!(self, LossSpec::HalfSquaredError | LossSpec::MaskedHalfSquaredError)
    }

    /// Lipschitz constant of the gradient in `Z`, before averaging.
    pub fn curvature(&self) -> f64 {
        match self {
            LossSpec::CrossEntropySigmoid => 0.25,
            _ => 1.0,
        }
    }
}

/// A complete objective
/// `L(DH) + (alpha/2) sum_i f_c^2(D_:i) + (alpha/(2 s^2)) sum_i f_r^2(H_i:)`,
/// with the loss and the `H` term divided by `T` when `averaged`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub loss: LossSpec,
    pub reg_d: RegularizerSpec,
    pub reg_h: RegularizerSpec,
    pub alpha: f64,
    #[serde(default = "one")]
    pub s: f64,
    pub k: usize,
    #[serde(default)]
    pub averaged: bool,
    /// Apply the l1 part of the `D` regularizer unsquared (`||v||_1` instead of `||v||_1^2`).
    #[serde(default)]
    pub unsquared_l1_d: bool,
    /// Apply the l1 part of the `H` regularizer unsquared, which decouples the columns of `H`.
    #[serde(default)]
    pub unsquared_l1_h: bool,
}

fn one() -> f64 {
    1.0
}

impl ProblemSpec {
    pub fn new(loss: LossSpec, reg_d: RegularizerSpec, reg_h: RegularizerSpec, alpha: f64, k: usize) -> Self {
        Self { loss, reg_d, reg_h, alpha, s: 1.0, k, averaged: false, unsquared_l1_d: false, unsquared_l1_h: false }
    }

    /// Half squared error with squared l2 on both factors (trace-norm induced).
    pub fn subspace(alpha: f64, k: usize) -> Self {
        Self::new(LossSpec::HalfSquaredError, RegularizerSpec::SquaredL2, RegularizerSpec::SquaredL2, alpha, k)
    }

    pub fn sparse(alpha: f64, k: usize) -> Self {
        Self::new(LossSpec::HalfSquaredError, RegularizerSpec::SquaredL1, RegularizerSpec::SquaredL1, alpha, k)
    }

    pub fn elastic_net(alpha: f64, k: usize, nu_d: f64, nu_h: f64) -> Self {
        Self::new(
            LossSpec::HalfSquaredError,
            RegularizerSpec::ElasticNetSq { nu: nu_d },
            RegularizerSpec::ElasticNetSq { nu: nu_h },
            alpha,
            k,
        )
    }

    pub fn with_averaged(mut self, averaged: bool) -> Self {
        self.averaged = averaged;
        self
    }

    pub fn with_scale(mut self, s: f64) -> Self {
        self.s = s;
        self
    }

    pub fn with_loss(mut self, loss: LossSpec) -> Self {
        self.loss = loss;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(invalid(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(invalid(format!("s must be positive, got {}", self.s)));
        }
        if self.k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        self.loss.validate()?;
        self.reg_d.validate()?;
        self.reg_h.validate()
    }

    /// Divisor applied to the loss and the `H` regularizer.
    pub fn sample_divisor(&self, t: usize) -> f64 {
        if self.averaged {
            t as f64
        } else {
            1.0
        }
    }

    /// Weight on `sum_i f_c^2(D_:i)`.
    pub fn weight_d(&self) -> f64 {
        self.alpha / 2.0
    }

    /// Weight on `sum_i f_r^2(H_i:)` for `t` samples.
    pub fn weight_h(&self, t: usize) -> f64 {
        self.alpha / (2.0 * self.s * self.s) / self.sample_divisor(t)
    }

    /// Per-sample weight on `f_r^2(h)` in the decoupled objective for one column of `H`.
    pub fn weight_h_sample(&self) -> f64 {
        self.alpha / (2.0 * self.s * self.s)
    }
}
