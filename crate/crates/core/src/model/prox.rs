//! Proximal operators for the non-smooth regularizer parts.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::spec::RegularizerSpec;

/// Output of [`prox_sql1`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxResult {
    pub z: Vec<f64>,
    pub threshold_used: f64,
    pub support_size: usize,
}

/// Componentwise `sign(u) max(|u| - tau, 0)`.
pub fn soft_threshold(u: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau >= 0.0) {
        return Err(invalid(format!("threshold must be non-negative, got {tau}")));
    }
    Ok(u.iter().map(|x| shrink(*x, tau)).collect())
}

#[inline]
pub(crate) fn shrink(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

/// Minimizer of `1/2 ||u - z||^2 + lambda ||z||_1^2`.
///
/// Entries are visited in order of decreasing magnitude (stable, so equal
/// magnitudes keep their original order) and admitted while they exceed the
/// running threshold `2 lambda C / (1 + 2 lambda r)`, where `C` is the sum of
/// the `r` admitted magnitudes. The final threshold is applied to all entries.
pub fn prox_sql1(u: &[f64], lambda: f64) -> Result<ProxResult> {
    if !(lambda >= 0.0) {
        return Err(invalid(format!("lambda must be non-negative, got {lambda}")));
    }
    Ok(prox_sql1_unchecked(u, lambda))
}

pub(crate) fn prox_sql1_unchecked(u: &[f64], lambda: f64) -> ProxResult {
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_by(|&a, &b| u[b].abs().total_cmp(&u[a].abs()));
    let mut c = 0.0;
    let mut r = 0usize;
    while r < u.len() {
        let next = u[order[r]].abs();
        if next > 2.0 * lambda * c / (1.0 + 2.0 * lambda * r as f64) {
            c += next;
            r += 1;
        } else {
            break;
        }
    }
    let threshold = 2.0 * lambda * c / (1.0 + 2.0 * lambda * r as f64);
    let z: Vec<f64> = u.iter().map(|x| shrink(*x, threshold)).collect();
    let support_size = z.iter().filter(|x| **x != 0.0).count();
    ProxResult { z, threshold_used: threshold, support_size }
}

/// Minimizer of `1/2 ||u - z||^2 + c ||z||_2` (group shrinkage).
pub(crate) fn prox_group_l2(u: &mut [f64], c: f64) {
    let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let factor = if n > c { 1.0 - c / n } else { 0.0 };
    u.iter_mut().for_each(|x| *x *= factor);
}

/// Minimizer of `1/2 ||u - z||^2 + c max(||z_a||^2, ||z_b||^2)` where the
/// vector is split into `z_a = z[..split]` and `z_b = z[split..]`.
pub(crate) fn prox_partitioned_max_l2(u: &mut [f64], split: usize, c: f64) {
    let split = split.min(u.len());
    let na = u[..split].iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = u[split..].iter().map(|x| x * x).sum::<f64>().sqrt();
    // theta is the share of the max's subgradient assigned to block a
    let theta = if na / (1.0 + 2.0 * c) >= nb {
        1.0
    } else if nb / (1.0 + 2.0 * c) > na {
        0.0
    } else if na + nb == 0.0 {
        1.0
    } else {
        ((na * (1.0 + 2.0 * c) - nb) / (2.0 * c * (na + nb))).clamp(0.0, 1.0)
    };
    let fa = 1.0 / (1.0 + 2.0 * c * theta);
    let fb = 1.0 / (1.0 + 2.0 * c * (1.0 - theta));
    u[..split].iter_mut().for_each(|x| *x *= fa);
    u[split..].iter_mut().for_each(|x| *x *= fb);
}

/// Weight `nu` of the `||v||_2^2` part of an elastic-net style regularizer, else 0.
pub(crate) fn smooth_nu(reg: &RegularizerSpec) -> f64 {
    match reg {
        RegularizerSpec::ElasticNetSq { nu } | RegularizerSpec::NonNormElasticNet { nu, .. } => *nu,
        _ => 0.0,
    }
}

/// Proximal map of `c` times the non-smooth part of a per-column regularizer
/// (everything except the `nu ||v||_2^2` term), applied in place.
pub(crate) fn prox_nonsmooth(reg: &RegularizerSpec, u: &mut [f64], c: f64, unsquared: bool) {
    match reg {
        RegularizerSpec::SquaredL1 | RegularizerSpec::ElasticNetSq { .. } => {
            let lambda = (1.0 - smooth_nu(reg)) * c;
            if unsquared {
                u.iter_mut().for_each(|x| *x = shrink(*x, lambda));
            } else {
                let out = prox_sql1_unchecked(u, lambda);
                u.copy_from_slice(&out.z);
            }
        }
        RegularizerSpec::NonNormElasticNet { nu, lambda } => {
            let base = (1.0 - nu) * c;
            for (j, x) in u.iter_mut().enumerate() {
                *x = shrink(*x, base * lambda.weight(j));
            }
        }
        RegularizerSpec::PartitionedMax { split, .. } => prox_partitioned_max_l2(u, *split, c),
        _ => unreachable!("no block proximal map for {reg:?}"),
    }
}
