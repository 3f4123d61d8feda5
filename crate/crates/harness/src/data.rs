//! Synthetic data and seed derivation.

use dlm_core::DenseMatrix;
use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{config, Result};

/// `d x t` matrix with i.i.d. `Normal(mean, sd^2)` entries.
///
/// Entries come from a ChaCha8 stream seeded with `seed` and are mapped to
/// normals by `rand_distr`'s ziggurat sampler, filled row by row.
pub fn gen_gaussian(d: usize, t: usize, mean: f64, sd: f64, seed: u64) -> Result<DenseMatrix> {
    if d == 0 || t == 0 {
        return Err(config(format!("data dimensions must be positive, got {d} x {t}")));
    }
    if !(sd > 0.0 && sd.is_finite() && mean.is_finite()) {
        return Err(config(format!("need finite mean and positive sd, got mean {mean}, sd {sd}")));
    }
    let normal = Normal::new(mean, sd).map_err(|e| config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_row_iterator(d, t, normal.sample_iter(&mut rng).take(d * t));
    Ok(DenseMatrix::new(m)?)
}

/// Deterministic child seed for a path of indices below `base`.
///
/// Each component selects a ChaCha8 stream under the running seed and the
/// first output word of that stream becomes the next seed. Seeds depend only
/// on the path, never on how many other cells or trials exist.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(base, |seed, &component| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(component);
        rng.next_u64()
    })
}
