use serde::{Deserialize, Serialize};

use super::{collect_cell, init_seed, run_trial, CellRecord, DataSet, ExperimentReport, TrialJob};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::csv_io::{fmt_f64, Table};
use crate::error::{config, Result};
use crate::pool::run_ordered;

/// Per-k statistics of one spec, averaged over data repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub spec: String,
    pub alpha: f64,
    pub d: usize,
    pub k: usize,
    pub mean_objective: f64,
    /// Sample standard deviation of the final objectives across inits.
    pub std_objective: f64,
    /// `std / mean`, averaged over repetitions.
    pub rel_std: f64,
    /// Largest `std / mean` over repetitions.
    pub rel_std_max: f64,
    /// `(best_k - best_T) / best_T` with the best objective over inits.
    pub gap: f64,
}

/// Solves each spec for every `k` in the grid plus `k = T` from `n_inits`
/// starts, on `repetitions` independent data draws.
pub fn k_sweep_experiment(cfg: &ExperimentConfig, threads: usize) -> Result<ExperimentReport> {
    if cfg.kind != ExperimentKind::KSweep {
        return Err(config(format!("expected a k_sweep config, got {:?}", cfg.kind)));
    }
    cfg.validate()?;
    let start = std::time::Instant::now();
    let data = DataSet::load(cfg, cfg.repetitions)?;
    let templates = cfg.spec_templates();
    let mut cells = Vec::new();
    let mut jobs = Vec::new();
    for d in data.dims() {
        let t = data.get(d, 0).shape().1;
        let ks = k_values(&cfg.k_grid(), t);
        for rep in 0..cfg.repetitions {
            for template in &templates {
                for &alpha in &cfg.alphas {
                    for &k in &ks {
                        for trial in 0..cfg.n_inits {
                            jobs.push(TrialJob {
                                d,
                                rep,
                                spec: template.problem(alpha, k),
                                seed: init_seed(cfg, d, k, rep, trial),
                                mean: cfg.init_mean(trial),
                            });
                        }
                        cells.push((template.name.clone(), alpha, d, k, rep));
                    }
                }
            }
        }
    }
    let mut outcomes = run_ordered(&jobs, threads, |job| run_trial(cfg, &data, job))?.into_iter();
    let records: Vec<CellRecord> = cells
        .into_iter()
        .map(|(name, alpha, d, k, rep)| {
            let trials = outcomes.by_ref().take(cfg.n_inits).collect();
            collect_cell(&name, alpha, d, k, rep, trials, cfg.solution_threshold)
        })
        .collect();
    let sweep = sweep_rows(&records, cfg.repetitions);
    Ok(ExperimentReport {
        kind: ExperimentKind::KSweep,
        cells: records,
        sweep,
        incremental: None,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn k_values(grid: &[usize], t: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = grid.iter().copied().filter(|k| *k <= t).collect();
    ks.push(t);
    ks.sort_unstable();
    ks.dedup();
    ks
}

fn stats(objs: &[f64]) -> (f64, f64, f64) {
    let ok: Vec<f64> = objs.iter().copied().filter(|o| o.is_finite()).collect();
    if ok.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let n = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / n;
    let std = if ok.len() > 1 { (ok.iter().map(|o| (o - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    let best = ok.iter().cloned().fold(f64::INFINITY, f64::min);
    (mean, std, best)
}

fn sweep_rows(cells: &[CellRecord], repetitions: usize) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    let first = cells.iter().filter(|c| c.repetition == 0);
    for c in first {
        let same = |o: &&CellRecord| o.spec == c.spec && o.alpha == c.alpha && o.d == c.d;
        let mut mean_sum = 0.0;
        let mut std_sum = 0.0;
        let mut rel_sum = 0.0;
        let mut rel_max: f64 = 0.0;
        let mut gap_sum = 0.0;
        for rep in 0..repetitions {
            let group: Vec<&CellRecord> = cells.iter().filter(|o| same(o) && o.repetition == rep).collect();
            let this = group.iter().find(|o| o.k == c.k).expect("cell for every repetition");
            let full = group.iter().max_by_key(|o| o.k).expect("nonempty group");
            let (mean, std, best) = stats(&this.objectives);
            let (_, _, best_full) = stats(&full.objectives);
            mean_sum += mean;
            std_sum += std;
            rel_sum += std / mean;
            rel_max = rel_max.max(std / mean);
            gap_sum += if this.k == full.k { 0.0 } else { (best - best_full) / best_full };
        }
        let n = repetitions as f64;
        rows.push(SweepRow {
            spec: c.spec.clone(),
            alpha: c.alpha,
            d: c.d,
            k: c.k,
            mean_objective: mean_sum / n,
            std_objective: std_sum / n,
            rel_std: rel_sum / n,
            rel_std_max: rel_max,
            gap: gap_sum / n,
        });
    }
    rows
}

pub(super) fn sweep_table(rows: &[SweepRow]) -> Table {
    let mut t =
        Table::new(&["spec", "alpha", "d", "k", "mean_objective", "std_objective", "rel_std", "rel_std_max", "gap"]);
    for r in rows {
        t.push(vec![
            r.spec.clone(),
            fmt_f64(r.alpha),
            r.d.to_string(),
            r.k.to_string(),
            fmt_f64(r.mean_objective),
            fmt_f64(r.std_objective),
            fmt_f64(r.rel_std),
            fmt_f64(r.rel_std_max),
            fmt_f64(r.gap),
        ]);
    }
    t
}
