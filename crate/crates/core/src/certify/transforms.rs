use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, DlmError, Result};
use crate::matrix::Factorization;
use crate::model::regularizer::vector_value;
use crate::spec::RegularizerSpec;

/// Which objective form the rebalanced factors should be stationary for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RebalanceDirection {
    /// Summed form `sum f_c(D_:i)^2 + f_r(H_i:)^2` to producted form `sum f_c(D_:i) f_r(H_i:)`.
    SummedToProducted,
    ProductedToSummed,
}

fn norm(spec: &RegularizerSpec, v: &[f64]) -> f64 {
    vector_value(spec, v, false).sqrt()
}

/// Rescales each dictionary column and code row by `gamma_i = f_r(H_i:) / f_c(D_:i)`:
/// `(D Gamma^-1, Gamma H)` for [`RebalanceDirection::SummedToProducted`] and
/// `(D Gamma^(1/3), Gamma^(-1/3) H)` for the reverse.
///
/// Indices where either norm is zero are removed first. The product `DH` is
/// preserved up to rounding.
pub fn rebalance_factors(
    fact: &Factorization,
    reg_d: &RegularizerSpec,
    reg_h: &RegularizerSpec,
    direction: RebalanceDirection,
) -> Result<Factorization> {
    for reg in [reg_d, reg_h] {
        reg.validate()?;
        if !reg.is_norm() {
            return Err(DlmError::Unsupported(format!("rebalancing needs a squared-norm regularizer, got {reg:?}")));
        }
    }
    let (d, h) = (fact.d().as_matrix(), fact.h().as_matrix());
    let mut cols = Vec::new();
    let mut rows = Vec::new();
    for i in 0..fact.k() {
        let fc = norm(reg_d, d.column(i).as_slice());
        let fr = norm(reg_h, &h.row(i).iter().copied().collect::<Vec<_>>());
        if fc == 0.0 || fr == 0.0 {
            continue;
        }
        let gamma = fr / fc;
        let g = match direction {
            RebalanceDirection::SummedToProducted => 1.0 / gamma,
            RebalanceDirection::ProductedToSummed => gamma.cbrt(),
        };
        cols.push(d.column(i) * g);
        rows.push(h.row(i) / g);
    }
    if cols.is_empty() {
        return Err(invalid("every dictionary column or code row has zero norm"));
    }
    Factorization::from_parts(DMatrix::from_columns(&cols), DMatrix::from_rows(&rows))
}

/// Returns `(D / sqrt(s), sqrt(s) H)`.
///
/// With squared l2 regularizers, a problem with scale `s` and weight `alpha * s`
/// evaluated at the output equals the problem with scale 1 and weight `alpha`
/// evaluated at the input, so minimizers map to minimizers.
pub fn scaling_transport(fact: &Factorization, s: f64) -> Result<Factorization> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(invalid(format!("scale must be positive, got {s}")));
    }
    let r = s.sqrt();
    Factorization::from_parts(fact.d().as_matrix() / r, fact.h().as_matrix() * r)
}
