//! Worker pool for independent solver runs.

use rayon::prelude::*;

use crate::error::{config, Result};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "DLM_THREADS";

/// Worker count from `DLM_THREADS`, or rayon's default when unset.
pub fn worker_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(rayon::current_num_threads()),
    }
}

/// Runs `f` over `jobs` on a pool of `threads` workers and returns the results
/// in job order, whatever order they finish in.
pub fn run_ordered<J, R, F>(jobs: &[J], threads: usize, f: F) -> Result<Vec<R>>
where
    J: Sync,
    R: Send,
    F: Fn(&J) -> R + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| jobs.par_iter().map(&f).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_keep_job_order() {
        let jobs: Vec<u64> = (0..200).collect();
        let out = run_ordered(&jobs, 4, |j| {
            // uneven work so completion order differs from job order
            std::thread::sleep(std::time::Duration::from_micros((200 - j) * 10));
            j * 2
        })
        .unwrap();
        assert_eq!(out, jobs.iter().map(|j| j * 2).collect::<Vec<_>>());
    }
}
