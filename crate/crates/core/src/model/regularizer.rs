//! Factor regularizers: values and subgradients per vector and per matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{shape, DlmError, Result};
use crate::matrix::DenseMatrix;
use crate::spec::{Orientation, RegularizerSpec};

pub(crate) fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub(crate) fn l2sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn pseudo_huber(v: &[f64], mu: f64) -> f64 {
    // sqrt(mu^2 + x^2) - mu, written to avoid cancellation for small x
    v.iter().map(|x| x * x / ((mu * mu + x * x).sqrt() + mu)).sum()
}

fn pseudo_huber_grad(x: f64, mu: f64) -> f64 {
    x / (mu * mu + x * x).sqrt()
}

/// Splits a vector for the partitioned max regularizer.
fn halves(v: &[f64], split: usize) -> (&[f64], &[f64]) {
    v.split_at(split.min(v.len()))
}

/// `f^2(v)`, or `f` with its l1 part unsquared when `unsquared` is set.
pub(crate) fn vector_value(spec: &RegularizerSpec, v: &[f64], unsquared: bool) -> f64 {
    let sq = |p: f64| if unsquared { p } else { p * p };
    match spec {
        RegularizerSpec::SquaredL2 => l2sq(v),
        RegularizerSpec::SquaredL1 => sq(l1(v)),
        RegularizerSpec::ElasticNetSq { nu } => nu * l2sq(v) + (1.0 - nu) * sq(l1(v)),
        RegularizerSpec::PseudoHuberSq { mu } => sq(pseudo_huber(v, *mu)),
        RegularizerSpec::SmoothedElasticNetSq { nu, mu } => nu * l2sq(v) + (1.0 - nu) * sq(pseudo_huber(v, *mu)),
        RegularizerSpec::WeightedSquaredL2 { lambda } => {
            (lambda.as_matrix() * DVector::from_column_slice(v)).norm_squared()
        }
        RegularizerSpec::NonNormElasticNet { nu, lambda } => {
            let weighted: f64 = v.iter().enumerate().map(|(i, x)| lambda.weight(i) * x.abs()).sum();
            nu * l2sq(v) + (1.0 - nu) * weighted
        }
        RegularizerSpec::PartitionedMax { split, inner } => {
            let (a, b) = halves(v, *split);
            vector_value(inner, a, unsquared).max(vector_value(inner, b, unsquared))
        }
        RegularizerSpec::CoupledRowsL1Sq | RegularizerSpec::CoupledRowsL2 => {
            unreachable!("coupled regularizers are not separable")
        }
    }
}

/// A subgradient of [`vector_value`], with `0` chosen at kinks of `|.|`.
pub(crate) fn vector_grad(spec: &RegularizerSpec, v: &[f64], unsquared: bool) -> Vec<f64> {
    // derivative of p -> p^2 (or p -> p) at p
    let outer = |p: f64| if unsquared { 1.0 } else { 2.0 * p };
    match spec {
        RegularizerSpec::SquaredL2 => v.iter().map(|x| 2.0 * x).collect(),
        RegularizerSpec::SquaredL1 => {
            let c = outer(l1(v));
            v.iter().map(|x| c * sign(*x)).collect()
        }
        RegularizerSpec::ElasticNetSq { nu } => {
            let c = (1.0 - nu) * outer(l1(v));
            v.iter().map(|x| 2.0 * nu * x + c * sign(*x)).collect()
        }
        RegularizerSpec::PseudoHuberSq { mu } => {
            let c = outer(pseudo_huber(v, *mu));
            v.iter().map(|x| c * pseudo_huber_grad(*x, *mu)).collect()
        }
        RegularizerSpec::SmoothedElasticNetSq { nu, mu } => {
            let c = (1.0 - nu) * outer(pseudo_huber(v, *mu));
            v.iter().map(|x| 2.0 * nu * x + c * pseudo_huber_grad(*x, *mu)).collect()
        }
        RegularizerSpec::WeightedSquaredL2 { lambda } => {
            let l = lambda.as_matrix();
            let g = l.transpose() * (l * DVector::from_column_slice(v)) * 2.0;
            g.as_slice().to_vec()
        }
        RegularizerSpec::NonNormElasticNet { nu, lambda } => {
            v.iter().enumerate().map(|(i, x)| 2.0 * nu * x + (1.0 - nu) * lambda.weight(i) * sign(*x)).collect()
        }
        RegularizerSpec::PartitionedMax { split, inner } => {
            let (a, b) = halves(v, *split);
            let mut g = vec![0.0; v.len()];
            if vector_value(inner, a, unsquared) >= vector_value(inner, b, unsquared) {
                g[..a.len()].copy_from_slice(&vector_grad(inner, a, unsquared));
            } else {
                g[a.len()..].copy_from_slice(&vector_grad(inner, b, unsquared));
            }
            g
        }
        RegularizerSpec::CoupledRowsL1Sq | RegularizerSpec::CoupledRowsL2 => {
            unreachable!("coupled regularizers are not separable")
        }
    }
}

pub(crate) fn vectors(m: &DMatrix<f64>, orientation: Orientation) -> Vec<Vec<f64>> {
    match orientation {
        Orientation::Columns => m.column_iter().map(|c| c.iter().copied().collect()).collect(),
        Orientation::Rows => m.row_iter().map(|r| r.iter().copied().collect()).collect(),
    }
}

/// Checks that the regularizer's parameters conform to the vectors it will see.
pub(crate) fn check_dims(spec: &RegularizerSpec, m: &DMatrix<f64>, orientation: Orientation) -> Result<()> {
    let len = match orientation {
        Orientation::Columns => m.nrows(),
        Orientation::Rows => m.ncols(),
    };
    match spec {
        RegularizerSpec::WeightedSquaredL2 { lambda } if lambda.cols() != len => {
            Err(shape(format!("weight matrix is {}x{}, vectors have length {len}", lambda.rows(), lambda.cols())))
        }
        RegularizerSpec::NonNormElasticNet { lambda, .. } => lambda.check_len(len),
        RegularizerSpec::PartitionedMax { split, .. } if *split > len => {
            Err(shape(format!("split index {split} exceeds vector length {len}")))
        }
        _ => Ok(()),
    }
}

pub(crate) fn matrix_value(
    spec: &RegularizerSpec,
    m: &DMatrix<f64>,
    orientation: Orientation,
    weight: f64,
    unsquared: bool,
) -> f64 {
    if weight == 0.0 {
        return 0.0;
    }
    let sum: f64 = match spec {
        RegularizerSpec::CoupledRowsL1Sq => m.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>().powi(2)).sum(),
        RegularizerSpec::CoupledRowsL2 => m.row_iter().map(|r| r.norm()).sum(),
        _ => vectors(m, orientation).iter().map(|v| vector_value(spec, v, unsquared)).sum(),
    };
    weight * sum
}

pub(crate) fn matrix_grad(
    spec: &RegularizerSpec,
    m: &DMatrix<f64>,
    orientation: Orientation,
    weight: f64,
    unsquared: bool,
) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(m.nrows(), m.ncols());
    if weight == 0.0 {
        return g;
    }
    match spec {
        RegularizerSpec::SquaredL2 => return m * (2.0 * weight),
        RegularizerSpec::CoupledRowsL1Sq => {
            for (i, row) in m.row_iter().enumerate() {
                let c = 2.0 * row.iter().map(|x| x.abs()).sum::<f64>();
                for (j, x) in row.iter().enumerate() {
                    g[(i, j)] = c * sign(*x);
                }
            }
        }
        RegularizerSpec::CoupledRowsL2 => {
            for (i, row) in m.row_iter().enumerate() {
                let n = row.norm();
                if n > 0.0 {
                    for (j, x) in row.iter().enumerate() {
                        g[(i, j)] = x / n;
                    }
                }
            }
        }
        _ => match orientation {
            Orientation::Columns => {
                for j in 0..m.ncols() {
                    let v: Vec<f64> = m.column(j).iter().copied().collect();
                    for (i, gi) in vector_grad(spec, &v, unsquared).into_iter().enumerate() {
                        g[(i, j)] = gi;
                    }
                }
            }
            Orientation::Rows => {
                for i in 0..m.nrows() {
                    let v: Vec<f64> = m.row(i).iter().copied().collect();
                    for (j, gj) in vector_grad(spec, &v, unsquared).into_iter().enumerate() {
                        g[(i, j)] = gj;
                    }
                }
            }
        },
    }
    g * weight
}

/// `f^2(v)` for a separable regularizer.
pub fn reg_vector_value(spec: &RegularizerSpec, v: &[f64]) -> Result<f64> {
    if !spec.is_separable() {
        return Err(DlmError::Unsupported(format!("{spec:?} is not separable over vectors")));
    }
    spec.validate()?;
    let as_column = DMatrix::from_column_slice(v.len(), 1, v);
    check_dims(spec, &as_column, Orientation::Columns)?;
    Ok(vector_value(spec, v, false))
}

/// `weight * sum_i f^2(M_:i)` (or over rows); coupled kinds act on rows of `m`.
pub fn reg_matrix_value(spec: &RegularizerSpec, m: &DenseMatrix, orientation: Orientation, weight: f64) -> Result<f64> {
    check_matrix_args(spec, m, orientation, weight)?;
    Ok(matrix_value(spec, m.as_matrix(), orientation, weight, false))
}

/// A subgradient of [`reg_matrix_value`] with respect to `m`.
pub fn reg_subgradient(
    spec: &RegularizerSpec,
    m: &DenseMatrix,
    orientation: Orientation,
    weight: f64,
) -> Result<DenseMatrix> {
    check_matrix_args(spec, m, orientation, weight)?;
    DenseMatrix::new(matrix_grad(spec, m.as_matrix(), orientation, weight, false))
}

fn check_matrix_args(spec: &RegularizerSpec, m: &DenseMatrix, orientation: Orientation, weight: f64) -> Result<()> {
    if !(weight >= 0.0 && weight.is_finite()) {
        return Err(crate::error::invalid(format!("weight must be non-negative, got {weight}")));
    }
    spec.validate()?;
    check_dims(spec, m.as_matrix(), orientation)
}
