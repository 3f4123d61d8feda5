use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, DlmError, Result};
use crate::matrix::Factorization;

/// Number of draws attempted before declaring the initialization rank deficient.
pub const MAX_INIT_DRAWS: usize = 5;

fn full_rank(m: &DMatrix<f64>) -> bool {
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let tol = max * m.nrows().max(m.ncols()) as f64 * f64::EPSILON;
    max > 0.0 && sv.iter().filter(|s| **s > tol).count() == m.nrows().min(m.ncols())
}

/// Draws `D` (d x k) then `H` (k x t) with i.i.d. `Normal(mean, sd^2)` entries,
/// re-drawing from the same stream while either factor is rank deficient.
pub fn random_factorization(d: usize, k: usize, t: usize, mean: f64, sd: f64, seed: u64) -> Result<Factorization> {
    if d == 0 || k == 0 || t == 0 {
        return Err(invalid("factor dimensions must be positive"));
    }
    let normal = Normal::new(mean, sd).map_err(|e| invalid(format!("bad init distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_INIT_DRAWS {
        // filled row by row so the draw order matches the row-major layout
        let dm = DMatrix::from_row_iterator(d, k, normal.sample_iter(&mut rng).take(d * k));
        let hm = DMatrix::from_row_iterator(k, t, normal.sample_iter(&mut rng).take(k * t));
        if full_rank(&dm) && full_rank(&hm) {
            return Factorization::from_parts(dm, hm);
        }
    }
    Err(DlmError::RankDeficientInit { attempts: MAX_INIT_DRAWS })
}
