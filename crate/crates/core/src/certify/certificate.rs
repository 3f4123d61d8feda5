use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::batch::Problem;
use crate::error::{invalid, DlmError, Result};
use crate::matrix::{Factorization, Observations};
use crate::spec::{ProblemSpec, RegularizerSpec};

/// Outcome of the global-optimality test for weighted-Frobenius objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Scaled gradient norm in `D` (see [`stationarity_residual`]).
    pub grad_d_norm: f64,
    /// Scaled gradient norm in `H`.
    pub grad_h_norm: f64,
    /// `sigma_max(Lambda^{-T} grad L(DH))`.
    pub dual_sigma_max: f64,
    /// Weight of the induced trace norm, `2 sqrt(w_D w_H)`; equals `alpha` for
    /// the unaveraged objective with `s = 1`.
    pub alpha: f64,
    pub globally_optimal: bool,
    pub hessian_min_eig: Option<f64>,
}

/// Frobenius norms of the objective's gradient blocks in `D` and `H`, divided
/// by `max(1, ||X||_F)`. Non-smooth regularizers use the subgradient with `0`
/// chosen at kinks, so small values are only meaningful for smooth specs.
pub fn stationarity_residual(fact: &Factorization, x: &Observations, spec: &ProblemSpec) -> Result<(f64, f64)> {
    let problem = Problem::new(spec, x)?;
    let (d, h) = (fact.d().as_matrix(), fact.h().as_matrix());
    problem.check(d, h)?;
    let (gd, gh) = problem.gradients(d, h);
    let scale = x.values().frobenius_norm().max(1.0);
    Ok((gd.norm() / scale, gh.norm() / scale))
}

/// [`global_certificate_with`] using `tol` for both tests.
pub fn global_certificate(fact: &Factorization, x: &Observations, spec: &ProblemSpec, tol: f64) -> Result<Certificate> {
    global_certificate_with(fact, x, spec, tol, tol)
}

/// Certifies global optimality of a stationary point of
/// `L(DH) + w_D ||Lambda D||_F^2 + w_H ||H||_F^2`.
///
/// The point is certified when both stationarity residuals are at most
/// `stationarity_tol` and `sigma_max(Lambda^{-T} grad L(DH)) <= 2 sqrt(w_D w_H) (1 + dual_tol)`.
pub fn global_certificate_with(
    fact: &Factorization,
    x: &Observations,
    spec: &ProblemSpec,
    stationarity_tol: f64,
    dual_tol: f64,
) -> Result<Certificate> {
    if !(stationarity_tol >= 0.0 && dual_tol >= 0.0) {
        return Err(invalid("tolerances must be non-negative"));
    }
    let lambda_inv_t = match &spec.reg_d {
        RegularizerSpec::SquaredL2 => None,
        RegularizerSpec::WeightedSquaredL2 { lambda } => Some(
            lambda
                .as_matrix()
                .clone()
                .try_inverse()
                .ok_or_else(|| invalid("weight matrix is not invertible"))?
                .transpose(),
        ),
        other => {
            return Err(DlmError::Unsupported(format!(
                "the certificate needs a (weighted) squared l2 dictionary regularizer, got {other:?}"
            )))
        }
    };
    if spec.reg_h != RegularizerSpec::SquaredL2 {
        return Err(DlmError::Unsupported("the certificate needs a squared l2 code regularizer".into()));
    }
    let problem = Problem::new(spec, x)?;
    let (d, h) = (fact.d().as_matrix(), fact.h().as_matrix());
    problem.check(d, h)?;
    if let Some(l) = &lambda_inv_t {
        if l.nrows() != d.nrows() {
            return Err(crate::error::shape("weight matrix does not match the dictionary rows"));
        }
    }
    let (grad_d_norm, grad_h_norm) = stationarity_residual(fact, x, spec)?;
    let g = problem.loss().gradient(&(d * h));
    let dual: DMatrix<f64> = match &lambda_inv_t {
        Some(l) => l * g,
        None => g,
    };
    let dual_sigma_max = dual.singular_values().max();
    let alpha = 2.0 * (problem.w_d * problem.w_h).sqrt();
    let globally_optimal = grad_d_norm <= stationarity_tol
        && grad_h_norm <= stationarity_tol
        && dual_sigma_max <= alpha * (1.0 + dual_tol);
    Ok(Certificate { grad_d_norm, grad_h_norm, dual_sigma_max, alpha, globally_optimal, hessian_min_eig: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::DenseMatrix;

    fn diag(v: &[f64]) -> DenseMatrix {
        DenseMatrix::diagonal(v).unwrap()
    }

    #[test]
    fn oracle_instance_is_certified() {
        let x: Observations = diag(&[2.0, 1.0]).into();
        let spec = ProblemSpec::subspace(0.5, 2);
        let root = diag(&[1.5f64.sqrt(), 0.5f64.sqrt()]);
        let fact = Factorization::new(root.clone(), root).unwrap();
        let cert = global_certificate(&fact, &x, &spec, 1e-10).unwrap();
        assert!((cert.dual_sigma_max - 0.5).abs() < 1e-12);
        assert_eq!(cert.alpha, 0.5);
        assert!(cert.globally_optimal, "{cert:?}");
    }

    #[test]
    fn zero_alpha_needs_an_exact_fit() {
        let x: Observations = diag(&[2.0, 1.0]).into();
        let spec = ProblemSpec::subspace(0.0, 2);
        let fact = Factorization::new(diag(&[2.0, 1.0]), DenseMatrix::identity(2)).unwrap();
        assert!(global_certificate(&fact, &x, &spec, 1e-10).unwrap().globally_optimal);
        let off = Factorization::new(diag(&[2.0, 0.9]), DenseMatrix::identity(2)).unwrap();
        assert!(!global_certificate(&off, &x, &spec, 1e-10).unwrap().globally_optimal);
    }

    #[test]
    fn trivial_stationary_point() {
        let x: Observations = diag(&[2.0, 1.0]).into();
        let spec = ProblemSpec::subspace(0.5, 2);
        let zero = Factorization::new(DenseMatrix::zeros(2, 2), DenseMatrix::zeros(2, 2)).unwrap();
        assert_eq!(stationarity_residual(&zero, &x, &spec).unwrap(), (0.0, 0.0));
        // stationary but not optimal: the residual's top singular value exceeds alpha
        let cert = global_certificate(&zero, &x, &spec, 1e-6).unwrap();
        assert!(!cert.globally_optimal);
        assert_eq!(cert.dual_sigma_max, 2.0);
    }

    #[test]
    fn rejects_other_regularizers() {
        let x: Observations = diag(&[2.0, 1.0]).into();
        let spec = ProblemSpec::sparse(0.5, 2);
        let fact = Factorization::new(DenseMatrix::identity(2), DenseMatrix::identity(2)).unwrap();
        assert!(matches!(global_certificate(&fact, &x, &spec, 1e-6), Err(DlmError::Unsupported(_))));
    }
}
