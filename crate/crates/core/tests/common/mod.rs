#![allow(dead_code)]

use dlm_core::DenseMatrix;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    DenseMatrix::from_row_major(rows, cols, data).unwrap()
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// Optimal value of `c/2 ||X - Z||_F^2 + tau ||Z||_*` by singular value shrinkage.
pub fn shrinkage_optimum(x: &DenseMatrix, c: f64, tau: f64) -> f64 {
    let sv = x.as_matrix().singular_values();
    sv.iter()
        .map(|s| {
            let kept = (s - tau / c).max(0.0);
            0.5 * c * (s - kept).powi(2) + tau * kept
        })
        .sum()
}

/// Central-difference gradient of `f` at `x`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-8);
    diff / scale
}

pub fn to_matrix(v: &[f64], rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_row_major(rows, cols, v.to_vec()).unwrap()
}

pub fn dmat(m: &DenseMatrix) -> DMatrix<f64> {
    m.as_matrix().clone()
}
