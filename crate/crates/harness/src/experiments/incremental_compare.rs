use std::time::Instant;

use dlm_core::batch::am_dlm_solve;
use dlm_core::incremental::{online_am_dlm, sgd_am_dlm, OnlineConfig, SgdConfig};
use dlm_core::TrialReport;
use serde::{Deserialize, Serialize};

use super::{init_seed, DataSet, ExperimentReport};
use crate::config::{ArmMethod, ExperimentConfig, ExperimentKind};
use crate::csv_io::{fmt_f64, Table};
use crate::error::{config, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmRecord {
    pub name: String,
    /// First evaluated sample count within the hit tolerance of the batch optimum.
    pub hit_step: Option<usize>,
    pub hit_epoch: Option<usize>,
    pub final_objective: f64,
    pub trace: Vec<(usize, f64)>,
    /// Step size per processed sample (stochastic gradient arms only).
    pub step_sizes: Vec<f64>,
    pub decrease_count: usize,
    /// Monotonic wall-clock of the whole arm; excluded from CSV output.
    pub seconds: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementalReport {
    pub d: usize,
    pub k: usize,
    pub alpha: f64,
    pub samples: usize,
    pub batch_objective: f64,
    pub batch_iterations: usize,
    pub batch_seconds: f64,
    pub hit_tolerance: f64,
    pub arms: Vec<ArmRecord>,
}

impl IncrementalReport {
    pub fn arm(&self, name: &str) -> Option<&ArmRecord> {
        self.arms.iter().find(|a| a.name == name)
    }

    pub(super) fn summary_table(&self) -> Table {
        let mut t = Table::new(&[
            "method",
            "hit_step",
            "hit_epoch",
            "final_objective",
            "relative_gap",
            "decrease_count",
            "status",
        ]);
        let opt = |v: Option<usize>| v.map(|s| s.to_string()).unwrap_or_default();
        t.push(vec![
            "batch".into(),
            String::new(),
            String::new(),
            fmt_f64(self.batch_objective),
            fmt_f64(0.0),
            "0".into(),
            "ok".into(),
        ]);
        for a in &self.arms {
            t.push(vec![
                a.name.clone(),
                opt(a.hit_step),
                opt(a.hit_epoch),
                fmt_f64(a.final_objective),
                fmt_f64((a.final_objective - self.batch_objective) / self.batch_objective),
                a.decrease_count.to_string(),
                a.failure.clone().unwrap_or_else(|| "ok".into()),
            ]);
        }
        t
    }

    pub(super) fn trace_table(&self) -> Table {
        let mut t = Table::new(&["method", "step", "objective"]);
        for a in &self.arms {
            for (step, obj) in &a.trace {
                t.push(vec![a.name.clone(), step.to_string(), fmt_f64(*obj)]);
            }
        }
        t
    }
}

/// First trace step whose objective is within `tol` (relative) of `target`.
pub fn hitting_step(trace: &[(usize, f64)], target: f64, tol: f64) -> Option<usize> {
    trace.iter().find(|(_, obj)| *obj <= target * (1.0 + tol)).map(|(s, _)| *s)
}

/// Runs the batch solver for the reference optimum, then every configured
/// incremental arm on the same data and initial dictionary.
///
/// Uses the first spec, alpha, dimension and k of the config; the objective is
/// always the averaged one. Arms run one after another so their wall-clock
/// times are comparable.
pub fn incremental_compare(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.kind != ExperimentKind::IncrementalCompare {
        return Err(config(format!("expected an incremental_compare config, got {:?}", cfg.kind)));
    }
    cfg.validate()?;
    let start = Instant::now();
    let data = DataSet::load(cfg, 1)?;
    let d = data.dims()[0];
    let x = data.get(d, 0);
    let t = x.shape().1;
    let (alpha, k) = (cfg.alphas[0], cfg.ks[0]);
    let spec = cfg.spec_templates()[0].problem(alpha, k).with_averaged(true);
    let seed = init_seed(cfg, d, k, 0, 0);
    let inc = &cfg.incremental;

    let clock = Instant::now();
    let (_, batch) = am_dlm_solve(x, &spec, &cfg.solver.clone().with_seed(seed), None)?;
    let batch_seconds = clock.elapsed().as_secs_f64();

    let values = x.values().as_matrix();
    let samples: Vec<Vec<f64>> = values.column_iter().map(|c| c.iter().copied().collect()).collect();
    let mut arms = Vec::new();
    for arm in &inc.arms {
        let clock = Instant::now();
        let run: dlm_core::Result<TrialReport> = match &arm.method {
            ArmMethod::Online => {
                let oc = OnlineConfig {
                    epochs: inc.epochs,
                    tol: inc.online_tol,
                    max_sweeps: inc.online_max_sweeps,
                    eval_every: inc.eval_every,
                    seed,
                    init_sd: cfg.init_sd,
                    inner: inc.online_inner.clone(),
                };
                online_am_dlm(&samples, &spec, &oc, None).map(|(_, r)| r)
            }
            ArmMethod::Sgd { schedule, eta0, momentum, accelerate } => {
                let sc = SgdConfig {
                    schedule: *schedule,
                    eta0: *eta0,
                    momentum: *momentum,
                    accelerate: *accelerate,
                    epochs: inc.epochs,
                    eval_every: inc.eval_every,
                    tol: 0.0,
                    seed,
                    init_sd: cfg.init_sd,
                    inner: inc.sgd_inner.clone(),
                };
                sgd_am_dlm(&samples, &spec, &sc, None).map(|(_, r)| r)
            }
        };
        let seconds = clock.elapsed().as_secs_f64();
        arms.push(match run {
            Ok(r) => {
                let hit_step = hitting_step(&r.objective_trace, batch.final_objective, inc.hit_tolerance);
                ArmRecord {
                    name: arm.name.clone(),
                    hit_step,
                    hit_epoch: hit_step.map(|s| s.div_ceil(t)),
                    final_objective: r.final_objective,
                    trace: r.objective_trace,
                    step_sizes: r.step_sizes,
                    decrease_count: r.decrease_count,
                    seconds,
                    failure: None,
                }
            }
            Err(e) => ArmRecord {
                name: arm.name.clone(),
                hit_step: None,
                hit_epoch: None,
                final_objective: f64::NAN,
                trace: Vec::new(),
                step_sizes: Vec::new(),
                decrease_count: 0,
                seconds,
                failure: Some(e.to_string()),
            },
        });
    }
    Ok(ExperimentReport {
        kind: ExperimentKind::IncrementalCompare,
        cells: Vec::new(),
        sweep: Vec::new(),
        incremental: Some(IncrementalReport {
            d,
            k,
            alpha,
            samples: t,
            batch_objective: batch.final_objective,
            batch_iterations: batch.iterations,
            batch_seconds,
            hit_tolerance: inc.hit_tolerance,
            arms,
        }),
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hitting_step_examples() {
        let trace = [(0, 10.0), (100, 1.2), (200, 1.04), (300, 1.01)];
        assert_eq!(hitting_step(&trace, 1.0, 0.05), Some(200));
        assert_eq!(hitting_step(&trace, 1.0, 0.001), None);
        assert_eq!(hitting_step(&trace, 10.0, 0.0), Some(0));
    }
}
