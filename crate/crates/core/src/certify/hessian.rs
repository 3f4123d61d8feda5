use nalgebra::{DMatrix, DVector};

use crate::batch::Problem;
use crate::error::{invalid, DlmError, Result};
use crate::matrix::{Factorization, Observations};
use crate::spec::ProblemSpec;

/// Largest `dk + kT` for which the dense finite-difference Hessian is formed.
pub const HESSIAN_SIZE_LIMIT: usize = 400;

/// Smallest eigenvalue of the symmetrized central-difference Hessian of the
/// objective over `(vec D, vec H)`.
///
/// Each coordinate is perturbed by `max(base, base |theta_j|)` where `base`
/// is `fd_step` (default `1e-5`), differencing the analytic gradient.
pub fn hessian_min_eigenvalue(
    fact: &Factorization,
    x: &Observations,
    spec: &ProblemSpec,
    fd_step: Option<f64>,
) -> Result<f64> {
    let base = fd_step.unwrap_or(1e-5);
    if !(base > 0.0) {
        return Err(invalid(format!("finite-difference step must be positive, got {base}")));
    }
    let problem = Problem::new(spec, x)?;
    let (d0, h0) = (fact.d().as_matrix(), fact.h().as_matrix());
    problem.check(d0, h0)?;
    let nd = d0.len();
    let n = nd + h0.len();
    if n > HESSIAN_SIZE_LIMIT {
        return Err(DlmError::TooLarge { size: n, limit: HESSIAN_SIZE_LIMIT });
    }
    let mut theta: Vec<f64> = d0.iter().chain(h0.iter()).copied().collect();
    let grad = |theta: &[f64]| -> DVector<f64> {
        let d = DMatrix::from_column_slice(d0.nrows(), d0.ncols(), &theta[..nd]);
        let h = DMatrix::from_column_slice(h0.nrows(), h0.ncols(), &theta[nd..]);
        let (gd, gh) = problem.gradients(&d, &h);
        DVector::from_iterator(n, gd.iter().chain(gh.iter()).copied())
    };
    let mut hess = DMatrix::zeros(n, n);
    for j in 0..n {
        let orig = theta[j];
        let step = base.max(base * orig.abs());
        theta[j] = orig + step;
        let plus = grad(&theta);
        theta[j] = orig - step;
        let minus = grad(&theta);
        theta[j] = orig;
        hess.set_column(j, &((plus - minus) / (2.0 * step)));
    }
    let sym = (&hess + hess.transpose()) * 0.5;
    Ok(sym.symmetric_eigenvalues().min())
}
