use serde::{Deserialize, Serialize};

use super::{collect_cell, init_seed, run_trial, CellRecord, DataSet, ExperimentReport, TrialJob};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::csv_io::{fmt_f64, Table};
use crate::error::{config, Result};
use crate::pool::run_ordered;

/// Runs every spec on every `(alpha, d, k)` cell from `n_inits` starts.
///
/// Cells are ordered by spec, then alpha, d and k. Trials run on `threads`
/// workers; a trial that fails is recorded in its cell and does not stop the
/// experiment.
pub fn multi_init_experiment(cfg: &ExperimentConfig, threads: usize) -> Result<ExperimentReport> {
    if cfg.kind != ExperimentKind::MultiInit {
        return Err(config(format!("expected a multi_init config, got {:?}", cfg.kind)));
    }
    cfg.validate()?;
    let start = std::time::Instant::now();
    let data = DataSet::load(cfg, 1)?;
    let mut cells = Vec::new();
    let mut jobs = Vec::new();
    for template in cfg.spec_templates() {
        for &alpha in &cfg.alphas {
            for d in data.dims() {
                for k in cfg.k_grid() {
                    let spec = template.problem(alpha, k);
                    for trial in 0..cfg.n_inits {
                        jobs.push(TrialJob {
                            d,
                            rep: 0,
                            spec: spec.clone(),
                            seed: init_seed(cfg, d, k, 0, trial),
                            mean: cfg.init_mean(trial),
                        });
                    }
                    cells.push((template.name.clone(), alpha, d, k));
                }
            }
        }
    }
    let mut outcomes = run_ordered(&jobs, threads, |job| run_trial(cfg, &data, job))?.into_iter();
    let records = cells
        .into_iter()
        .map(|(name, alpha, d, k)| {
            let trials = outcomes.by_ref().take(cfg.n_inits).collect();
            collect_cell(&name, alpha, d, k, 0, trials, cfg.solution_threshold)
        })
        .collect();
    Ok(ExperimentReport {
        kind: ExperimentKind::MultiInit,
        cells: records,
        sweep: Vec::new(),
        incremental: None,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Grid-wide extremes of one metric for one spec, with the cell that attains them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub spec: String,
    /// `objective` or `solution`.
    pub metric: String,
    pub min: f64,
    pub min_cell: (f64, usize, usize),
    pub max: f64,
    pub max_cell: (f64, usize, usize),
}

/// Per-spec minimum and maximum over the grid of the largest pairwise
/// difference in each cell, in the first-seen spec order.
pub fn summarize(cells: &[CellRecord]) -> Vec<SummaryRow> {
    let mut specs: Vec<&str> = Vec::new();
    for c in cells {
        if !specs.contains(&c.spec.as_str()) {
            specs.push(&c.spec);
        }
    }
    let mut rows = Vec::new();
    for spec in specs {
        for (metric, value) in [
            ("objective", (|c: &CellRecord| c.rel_obj_diff_max) as fn(&CellRecord) -> f64),
            ("solution", |c: &CellRecord| c.sol_diff_max),
        ] {
            let mut row: Option<SummaryRow> = None;
            for c in cells.iter().filter(|c| c.spec == spec && value(c).is_finite()) {
                let v = value(c);
                let cell = (c.alpha, c.d, c.k);
                let r = row.get_or_insert(SummaryRow {
                    spec: spec.to_string(),
                    metric: metric.to_string(),
                    min: v,
                    min_cell: cell,
                    max: v,
                    max_cell: cell,
                });
                if v < r.min {
                    r.min = v;
                    r.min_cell = cell;
                }
                if v > r.max {
                    r.max = v;
                    r.max_cell = cell;
                }
            }
            rows.extend(row);
        }
    }
    rows
}

pub(super) fn cell_table(cells: &[CellRecord]) -> Table {
    let mut t = Table::new(&[
        "spec",
        "alpha",
        "d",
        "k",
        "n_ok",
        "rel_obj_diff_min",
        "rel_obj_diff_max",
        "sol_diff_min",
        "sol_diff_max",
        "status",
    ]);
    for c in cells {
        t.push(vec![
            c.spec.clone(),
            fmt_f64(c.alpha),
            c.d.to_string(),
            c.k.to_string(),
            c.objectives.iter().filter(|o| o.is_finite()).count().to_string(),
            fmt_f64(c.rel_obj_diff_min),
            fmt_f64(c.rel_obj_diff_max),
            fmt_f64(c.sol_diff_min),
            fmt_f64(c.sol_diff_max),
            c.failure.clone().unwrap_or_else(|| "ok".into()),
        ]);
    }
    t
}

pub(super) fn summary_table(rows: &[SummaryRow]) -> Table {
    let mut t =
        Table::new(&["spec", "metric", "min", "min_alpha", "min_d", "min_k", "max", "max_alpha", "max_d", "max_k"]);
    for r in rows {
        t.push(vec![
            r.spec.clone(),
            r.metric.clone(),
            fmt_f64(r.min),
            fmt_f64(r.min_cell.0),
            r.min_cell.1.to_string(),
            r.min_cell.2.to_string(),
            fmt_f64(r.max),
            fmt_f64(r.max_cell.0),
            r.max_cell.1.to_string(),
            r.max_cell.2.to_string(),
        ]);
    }
    t
}
