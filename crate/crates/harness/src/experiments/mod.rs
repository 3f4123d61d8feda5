//! Experiment protocols: multi-initialization tables, k sweeps and
//! incremental-versus-batch comparisons.

mod incremental_compare;
mod k_sweep;
mod multi_init;

use std::collections::BTreeMap;
use std::path::Path;

use dlm_core::batch::{am_dlm_solve, random_factorization};
use dlm_core::metrics::thresholded_solution_difference;
use dlm_core::{DenseMatrix, Observations, ProblemSpec};
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, ExperimentConfig, ExperimentKind};
use crate::csv_io::{read_matrix_csv, Table};
use crate::data::{derive_seed, gen_gaussian};
use crate::error::Result;

pub use incremental_compare::{incremental_compare, ArmRecord, IncrementalReport};
pub use k_sweep::{k_sweep_experiment, SweepRow};
pub use multi_init::{multi_init_experiment, summarize, SummaryRow};

const DATA_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;

/// Results of the independent runs for one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub spec: String,
    pub alpha: f64,
    pub d: usize,
    pub k: usize,
    /// Data draw, for protocols that repeat over data.
    pub repetition: usize,
    /// Final objective per trial; `NaN` where the trial failed.
    pub objectives: Vec<f64>,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
    pub rel_obj_diff_min: f64,
    pub rel_obj_diff_max: f64,
    pub sol_diff_min: f64,
    pub sol_diff_max: f64,
    /// Failed trials, if any.
    pub failure: Option<String>,
    /// Summed solver wall-clock; excluded from CSV output.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub cells: Vec<CellRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incremental: Option<IncrementalReport>,
    pub seconds: f64,
}

impl ExperimentReport {
    pub fn failures(&self) -> Vec<String> {
        let cells = self.cells.iter().filter_map(|c| {
            c.failure.as_ref().map(|f| format!("{} alpha={} d={} k={}: {f}", c.spec, c.alpha, c.d, c.k))
        });
        let arms = self
            .incremental
            .iter()
            .flat_map(|r| &r.arms)
            .filter_map(|a| a.failure.as_ref().map(|f| format!("{}: {f}", a.name)));
        cells.chain(arms).collect()
    }

    /// Writes the CSV files of this report into `dir` and returns their names.
    pub fn write_csv(&self, dir: &Path) -> Result<Vec<String>> {
        let mut written = Vec::new();
        let mut emit = |name: &str, table: Table| -> Result<()> {
            table.write(dir.join(name))?;
            written.push(name.to_string());
            Ok(())
        };
        match self.kind {
            ExperimentKind::MultiInit => {
                emit("multi_init.csv", multi_init::cell_table(&self.cells))?;
                emit("multi_init_trials.csv", trial_table(&self.cells))?;
                emit("multi_init_summary.csv", multi_init::summary_table(&summarize(&self.cells)))?;
            }
            ExperimentKind::KSweep => {
                emit("k_sweep.csv", k_sweep::sweep_table(&self.sweep))?;
                emit("k_sweep_trials.csv", trial_table(&self.cells))?;
            }
            ExperimentKind::IncrementalCompare => {
                if let Some(inc) = &self.incremental {
                    emit("incremental_summary.csv", inc.summary_table())?;
                    emit("incremental_trace.csv", inc.trace_table())?;
                }
            }
            ExperimentKind::Solve | ExperimentKind::Certify => {}
        }
        Ok(written)
    }
}

pub(crate) fn trial_table(cells: &[CellRecord]) -> Table {
    use crate::csv_io::fmt_f64;
    let mut t = Table::new(&["spec", "alpha", "d", "k", "repetition", "trial", "objective", "iterations", "converged"]);
    for c in cells {
        for (i, obj) in c.objectives.iter().enumerate() {
            t.push(vec![
                c.spec.clone(),
                fmt_f64(c.alpha),
                c.d.to_string(),
                c.k.to_string(),
                c.repetition.to_string(),
                i.to_string(),
                fmt_f64(*obj),
                c.iterations[i].to_string(),
                c.converged[i].to_string(),
            ]);
        }
    }
    t
}

/// Data matrices keyed by dimension, shared by all cells with that dimension.
pub(crate) struct DataSet {
    by_dim: BTreeMap<(usize, usize), Observations>,
}

impl DataSet {
    pub(crate) fn load(cfg: &ExperimentConfig, repetitions: usize) -> Result<Self> {
        let mut by_dim = BTreeMap::new();
        match &cfg.data {
            DataSource::Gaussian { mean, sd } => {
                for d in cfg.dim_grid() {
                    for rep in 0..repetitions {
                        let seed = derive_seed(cfg.seed, &[DATA_STREAM, d as u64, rep as u64]);
                        by_dim.insert((d, rep), gen_gaussian(d, cfg.samples, *mean, *sd, seed)?.into());
                    }
                }
            }
            DataSource::Csv { path } => {
                let x = read_matrix_csv(path)?;
                let d = x.shape().0;
                for rep in 0..repetitions {
                    by_dim.insert((d, rep), x.clone());
                }
            }
        }
        Ok(Self { by_dim })
    }

    pub(crate) fn dims(&self) -> Vec<usize> {
        let mut dims: Vec<usize> = self.by_dim.keys().map(|(d, _)| *d).collect();
        dims.dedup();
        dims
    }

    pub(crate) fn get(&self, d: usize, rep: usize) -> &Observations {
        &self.by_dim[&(d, rep)]
    }
}

/// One solver run of a cell.
#[derive(Debug, Clone)]
pub(crate) struct TrialJob {
    pub d: usize,
    pub rep: usize,
    pub spec: ProblemSpec,
    pub seed: u64,
    pub mean: f64,
}

pub(crate) struct TrialOutcome {
    pub result: std::result::Result<(f64, usize, bool, DenseMatrix), String>,
    pub seconds: f64,
}

pub(crate) fn init_seed(cfg: &ExperimentConfig, d: usize, k: usize, rep: usize, trial: usize) -> u64 {
    match &cfg.init_seeds {
        Some(seeds) => seeds[trial],
        None => derive_seed(cfg.seed, &[INIT_STREAM, d as u64, k as u64, rep as u64, trial as u64]),
    }
}

pub(crate) fn run_trial(cfg: &ExperimentConfig, data: &DataSet, job: &TrialJob) -> TrialOutcome {
    let start = std::time::Instant::now();
    let x = data.get(job.d, job.rep);
    let result = (|| {
        let (d, t) = x.shape();
        let k = job.spec.k;
        let sd = cfg.init_sd.unwrap_or(1.0 / (k as f64).sqrt());
        let init = random_factorization(d, k, t, job.mean, sd, job.seed)?;
        let solver = cfg.solver.clone().with_seed(job.seed);
        let (fact, report) = am_dlm_solve(x, &job.spec, &solver, Some(&init))?;
        Ok::<_, dlm_core::DlmError>((report.final_objective, report.iterations, report.converged, fact.product()))
    })()
    .map_err(|e| e.to_string());
    TrialOutcome { result, seconds: start.elapsed().as_secs_f64() }
}

/// Builds a cell record from the outcomes of its trials, in trial order.
pub(crate) fn collect_cell(
    spec: &str,
    alpha: f64,
    d: usize,
    k: usize,
    repetition: usize,
    outcomes: Vec<TrialOutcome>,
    threshold: f64,
) -> CellRecord {
    let mut objectives = Vec::new();
    let mut iterations = Vec::new();
    let mut converged = Vec::new();
    let mut products = Vec::new();
    let mut failures = Vec::new();
    let mut seconds = 0.0;
    for (i, o) in outcomes.into_iter().enumerate() {
        seconds += o.seconds;
        match o.result {
            Ok((obj, its, conv, z)) => {
                objectives.push(obj);
                iterations.push(its);
                converged.push(conv);
                products.push(z);
            }
            Err(e) => {
                objectives.push(f64::NAN);
                iterations.push(0);
                converged.push(false);
                failures.push(format!("trial {i}: {e}"));
            }
        }
    }
    let ok: Vec<f64> = objectives.iter().copied().filter(|o| o.is_finite()).collect();
    let (rel_obj_diff_min, rel_obj_diff_max) = pairwise_objective_differences(&ok);
    let (sol_diff_min, sol_diff_max) = pairwise_solution_differences(&products, threshold);
    CellRecord {
        spec: spec.to_string(),
        alpha,
        d,
        k,
        repetition,
        objectives,
        iterations,
        converged,
        rel_obj_diff_min,
        rel_obj_diff_max,
        sol_diff_min,
        sol_diff_max,
        failure: (!failures.is_empty()).then(|| failures.join("; ")),
        seconds,
    }
}

/// Smallest and largest `|a - b| / mean` over pairs of objectives.
pub fn pairwise_objective_differences(objs: &[f64]) -> (f64, f64) {
    if objs.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let mean = objs.iter().sum::<f64>() / objs.len() as f64;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (i, a) in objs.iter().enumerate() {
        for b in &objs[i + 1..] {
            let r = if mean == 0.0 {
                if a == b {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (a - b).abs() / mean.abs()
            };
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    (lo, hi)
}

fn pairwise_solution_differences(zs: &[DenseMatrix], threshold: f64) -> (f64, f64) {
    if zs.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (i, a) in zs.iter().enumerate() {
        for b in &zs[i + 1..] {
            let r = thresholded_solution_difference(a, b, threshold).unwrap_or(f64::NAN);
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    (lo, hi)
}
