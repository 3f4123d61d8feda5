//! Matching losses `L(Z; X)` and their gradients in `Z`.

use nalgebra::DMatrix;

use crate::error::{invalid, shape, Result};
use crate::matrix::{DenseMatrix, Observations};
use crate::spec::LossSpec;

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `min_s 1/2 (r - s)^2 + alpha_s |s|`, the Huber function of the residual.
fn huber(r: f64, alpha_s: f64) -> f64 {
    if r.abs() <= alpha_s {
        0.5 * r * r
    } else {
        alpha_s * r.abs() - 0.5 * alpha_s * alpha_s
    }
}

/// A loss bound to validated data, evaluated repeatedly by the solvers.
#[derive(Debug, Clone)]
pub(crate) struct BoundLoss<'a> {
    pub spec: &'a LossSpec,
    pub x: &'a DMatrix<f64>,
    pub mask: Option<&'a DMatrix<f64>>,
    /// Multiplier applied to the summed loss (1, 1/T or 1/observed).
    pub scale: f64,
}

impl<'a> BoundLoss<'a> {
    pub fn new(spec: &'a LossSpec, x: &'a Observations, averaged: bool) -> Result<Self> {
        let mask = match (spec, x) {
            (LossSpec::MaskedHalfSquaredError, Observations::Masked(m)) => Some(m.weights()),
            (LossSpec::MaskedHalfSquaredError, Observations::Full(_)) => None,
            (_, Observations::Masked(_)) => {
                return Err(invalid("only the masked half squared error accepts partially observed data"))
            }
            _ => None,
        };
        let values = x.values().as_matrix();
        if matches!(spec, LossSpec::CrossEntropySigmoid) {
            if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(invalid(format!("cross-entropy targets must lie in [0, 1], found {v}")));
            }
        }
        spec.validate()?;
        let scale = if !averaged {
            1.0
        } else if matches!(spec, LossSpec::MaskedHalfSquaredError) {
            1.0 / x.observed_count() as f64
        } else {
            1.0 / x.samples() as f64
        };
        Ok(Self { spec, x: values, mask, scale })
    }

    pub fn check_shape(&self, z: &DMatrix<f64>) -> Result<()> {
        if z.shape() != self.x.shape() {
            return Err(shape(format!("reconstruction is {:?}, data is {:?}", z.shape(), self.x.shape())));
        }
        Ok(())
    }

    /// Curvature bound of the scaled loss in `Z`.
    pub fn lipschitz(&self) -> f64 {
        self.spec.curvature() * self.scale
    }

    pub fn value(&self, z: &DMatrix<f64>) -> f64 {
        let x = self.x;
        let sum: f64 = match self.spec {
            LossSpec::HalfSquaredError => 0.5 * (z - x).norm_squared(),
            LossSpec::MaskedHalfSquaredError => match self.mask {
                Some(m) => 0.5 * (z - x).component_mul(m).norm_squared(),
                None => 0.5 * (z - x).norm_squared(),
            },
            LossSpec::CrossEntropySigmoid => z.iter().zip(x.iter()).map(|(z, x)| softplus(*z) - x * z).sum(),
            LossSpec::RobustHalfSquaredError { alpha_s } => {
                z.iter().zip(x.iter()).map(|(z, x)| huber(x - z, *alpha_s)).sum()
            }
        };
        self.scale * sum
    }

    pub fn gradient(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let x = self.x;
        let mut g = match self.spec {
            LossSpec::HalfSquaredError => z - x,
            LossSpec::MaskedHalfSquaredError => match self.mask {
                Some(m) => (z - x).component_mul(m),
                None => z - x,
            },
            LossSpec::CrossEntropySigmoid => z.zip_map(x, |z, x| sigmoid(z) - x),
            LossSpec::RobustHalfSquaredError { alpha_s } => {
                let a = *alpha_s;
                z.zip_map(x, |z, x| -(x - z).clamp(-a, a))
            }
        };
        g *= self.scale;
        g
    }
}

/// Loss of the reconstruction `z` against the data `x`.
pub fn loss_value(spec: &LossSpec, z: &DenseMatrix, x: &Observations, averaged: bool) -> Result<f64> {
    let loss = BoundLoss::new(spec, x, averaged)?;
    loss.check_shape(z.as_matrix())?;
    Ok(loss.value(z.as_matrix()))
}

/// Gradient of [`loss_value`] with respect to `z`.
pub fn loss_gradient(spec: &LossSpec, z: &DenseMatrix, x: &Observations, averaged: bool) -> Result<DenseMatrix> {
    let loss = BoundLoss::new(spec, x, averaged)?;
    loss.check_shape(z.as_matrix())?;
    DenseMatrix::new(loss.gradient(z.as_matrix()))
}

/// Optimal sparse outlier term for the robust half squared loss: `soft_threshold(x - Dh, alpha_s)`.
pub fn robust_inner_solve(residual_target: &[f64], alpha_s: f64) -> Result<Vec<f64>> {
    if !(alpha_s > 0.0) {
        return Err(invalid(format!("alpha_s must be positive, got {alpha_s}")));
    }
    super::prox::soft_threshold(residual_target, alpha_s)
}
