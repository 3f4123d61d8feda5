//! Randomized check of the squared-l1 proximal operator against an
//! independent projected-gradient solve.

use dlm_core::model::prox_sql1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// Largest allowed entrywise distance to the reference minimizer.
pub const MATCH_TOL: f64 = 1e-6;
/// Largest allowed violation of the optimality condition.
pub const SUBGRADIENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxCheckReport {
    pub trials: usize,
    pub seed: u64,
    pub max_dim: usize,
    pub max_abs_diff: f64,
    pub max_subgradient_violation: f64,
    pub failed_trials: Vec<usize>,
}

impl ProxCheckReport {
    pub fn passed(&self) -> bool {
        self.failed_trials.is_empty()
    }
}

/// Minimizer of `1/2 ||u - z||^2 + lambda ||z||_1^2` by accelerated projected
/// gradient over sign-matched magnitudes.
pub fn reference_prox(u: &[f64], lambda: f64) -> Vec<f64> {
    let a: Vec<f64> = u.iter().map(|x| x.abs()).collect();
    let step = 1.0 / (1.0 + 2.0 * lambda * a.len() as f64);
    let mut w = vec![0.0; a.len()];
    let mut y = w.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let s: f64 = y.iter().sum();
        let next: Vec<f64> =
            y.iter().zip(&a).map(|(yi, ai)| (yi - step * (yi - ai + 2.0 * lambda * s)).max(0.0)).collect();
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let moved = next.iter().zip(&w).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        y = next.iter().zip(&w).map(|(p, q)| p + (t - 1.0) / t_next * (p - q)).collect();
        w = next;
        t = t_next;
        if moved < 1e-15 {
            break;
        }
    }
    w.iter().zip(u).map(|(wi, ui)| wi * ui.signum()).collect()
}

/// Largest violation of `u - z = 2 lambda ||z||_1 g`, `g` a subgradient of `||.||_1` at `z`.
pub fn subgradient_violation(u: &[f64], z: &[f64], lambda: f64) -> f64 {
    let c = 2.0 * lambda * z.iter().map(|x| x.abs()).sum::<f64>();
    u.iter()
        .zip(z)
        .map(|(ui, zi)| if *zi != 0.0 { (ui - zi - c * zi.signum()).abs() } else { ((ui - zi).abs() - c).max(0.0) })
        .fold(0.0, f64::max)
}

pub fn prox_check(trials: usize, seed: u64, max_dim: usize) -> Result<ProxCheckReport> {
    if trials == 0 || max_dim == 0 {
        return Err(config("trials and max_dim must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ProxCheckReport {
        trials,
        seed,
        max_dim,
        max_abs_diff: 0.0,
        max_subgradient_violation: 0.0,
        failed_trials: Vec::new(),
    };
    for trial in 0..trials {
        let dim = rng.random_range(1..=max_dim);
        let scale: f64 = rng.random_range(0.1..5.0);
        let u: Vec<f64> = (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let lambda: f64 = rng.random_range(0.0..3.0);
        let z = prox_sql1(&u, lambda)?.z;
        let diff = z.iter().zip(reference_prox(&u, lambda)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let viol = subgradient_violation(&u, &z, lambda);
        report.max_abs_diff = report.max_abs_diff.max(diff);
        report.max_subgradient_violation = report.max_subgradient_violation.max(viol);
        if !(diff < MATCH_TOL && viol < SUBGRADIENT_TOL) {
            report.failed_trials.push(trial);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_matches_hand_example() {
        let z = reference_prox(&[3.0, 1.0], 0.5);
        assert!((z[0] - 1.5).abs() < 1e-9 && z[1].abs() < 1e-9);
        assert_eq!(subgradient_violation(&[3.0, 1.0], &[1.5, 0.0], 0.5), 0.0);
        assert!(subgradient_violation(&[3.0, 1.0], &[3.0, 1.0], 0.5) > 1.0);
    }

    #[test]
    fn small_run_passes() {
        let r = prox_check(50, 9, 5).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(prox_check(0, 0, 5).is_err());
    }
}
