//! JSON experiment configuration.
//!
//! A config file only needs `kind`; every other field falls back to the
//! defaults of that kind, merged key by key (nested objects included).

use std::path::{Path, PathBuf};

use dlm_core::batch::SolverConfig;
use dlm_core::incremental::Schedule;
use dlm_core::model::{InnerConfig, InnerMode};
use dlm_core::{DiagWeights, LossSpec, ProblemSpec, RegularizerSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{config, HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    MultiInit,
    KSweep,
    IncrementalCompare,
    Solve,
    Certify,
}

/// A problem specification without `alpha` and `k`, which come from the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecTemplate {
    pub name: String,
    #[serde(default = "half_squared")]
    pub loss: LossSpec,
    pub reg_d: RegularizerSpec,
    pub reg_h: RegularizerSpec,
    #[serde(default = "yes")]
    pub averaged: bool,
    #[serde(default = "one")]
    pub s: f64,
    #[serde(default)]
    pub unsquared_l1_d: bool,
    #[serde(default)]
    pub unsquared_l1_h: bool,
}

fn half_squared() -> LossSpec {
    LossSpec::HalfSquaredError
}

fn yes() -> bool {
    true
}

fn one() -> f64 {
    1.0
}

/// Names accepted by [`SpecTemplate::preset`].
pub const PRESETS: [&str; 6] =
    ["subspace", "sparse", "elastic_net", "non_norm_elastic_net", "coupled_l1", "coupled_l2"];

impl SpecTemplate {
    pub fn new(name: &str, reg_d: RegularizerSpec, reg_h: RegularizerSpec) -> Self {
        Self {
            name: name.to_string(),
            loss: LossSpec::HalfSquaredError,
            reg_d,
            reg_h,
            averaged: true,
            s: 1.0,
            unsquared_l1_d: false,
            unsquared_l1_h: false,
        }
    }

    /// Named regularizer pairs of the multi-initialization study.
    pub fn preset(name: &str) -> Result<Self> {
        use RegularizerSpec::*;
        let (d, h) = match name {
            "subspace" => (SquaredL2, SquaredL2),
            "sparse" => (SquaredL1, SquaredL1),
            "elastic_net" => (ElasticNetSq { nu: 0.5 }, ElasticNetSq { nu: 0.5 }),
            "non_norm_elastic_net" => {
                (NonNormElasticNet { nu: 0.5, lambda: DiagWeights::Ramp }, ElasticNetSq { nu: 0.5 })
            }
            "coupled_l1" => (CoupledRowsL1Sq, SquaredL2),
            "coupled_l2" => (CoupledRowsL2, SquaredL2),
            other => return Err(config(format!("unknown spec {other:?}; expected one of {}", PRESETS.join(", ")))),
        };
        Ok(Self::new(name, d, h))
    }

    pub fn elastic_net(nu_d: f64, nu_h: f64) -> Self {
        Self::new(
            &format!("elastic_net_{nu_d}_{nu_h}"),
            RegularizerSpec::ElasticNetSq { nu: nu_d },
            RegularizerSpec::ElasticNetSq { nu: nu_h },
        )
    }

    pub fn problem(&self, alpha: f64, k: usize) -> ProblemSpec {
        ProblemSpec {
            loss: self.loss.clone(),
            reg_d: self.reg_d.clone(),
            reg_h: self.reg_h.clone(),
            alpha,
            s: self.s,
            k,
            averaged: self.averaged,
            unsquared_l1_d: self.unsquared_l1_d,
            unsquared_l1_h: self.unsquared_l1_h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// Fresh `d x samples` draws per grid dimension.
    Gaussian { mean: f64, sd: f64 },
    /// A fixed matrix; its row count replaces the `dims` grid.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ArmMethod {
    Online,
    Sgd { schedule: Schedule, eta0: f64, momentum: f64, accelerate: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementalArm {
    pub name: String,
    #[serde(flatten)]
    pub method: ArmMethod,
}

impl IncrementalArm {
    pub fn sgd(name: &str, schedule: Schedule, eta0: f64, momentum: f64, accelerate: bool) -> Self {
        Self { name: name.into(), method: ArmMethod::Sgd { schedule, eta0, momentum, accelerate } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementalSettings {
    pub epochs: usize,
    /// Samples between objective evaluations; `None` evaluates once per epoch.
    pub eval_every: Option<usize>,
    /// Relative gap to the batch optimum counted as reaching it.
    pub hit_tolerance: f64,
    pub online_tol: f64,
    pub online_max_sweeps: usize,
    /// Code solves inside stochastic gradient arms.
    pub sgd_inner: InnerConfig,
    /// Code solves inside the online arm and for objective evaluation.
    pub online_inner: InnerConfig,
    pub arms: Vec<IncrementalArm>,
}

impl Default for IncrementalSettings {
    fn default() -> Self {
        use Schedule::*;
        Self {
            epochs: 50,
            eval_every: None,
            hit_tolerance: 0.05,
            online_tol: 1e-6,
            online_max_sweeps: 100,
            sgd_inner: InnerConfig { mode: InnerMode::Subgradient, ..InnerConfig::default() },
            online_inner: InnerConfig::default(),
            arms: vec![
                IncrementalArm { name: "online".into(), method: ArmMethod::Online },
                IncrementalArm::sgd("sgd_type1_0.5", Type1, 0.5, 0.0, false),
                IncrementalArm::sgd("sgd_type2_0.5", Type2, 0.5, 0.0, false),
                IncrementalArm::sgd("sgd_type3_0.5", Type3, 0.5, 0.0, false),
                IncrementalArm::sgd("sgd_type2_0.05", Type2, 0.05, 0.0, false),
                IncrementalArm::sgd("sgd_type3_0.05", Type3, 0.05, 0.0, false),
                IncrementalArm::sgd("accelerated_type2_0.5", Type2, 0.5, 0.0, true),
                IncrementalArm::sgd("momentum_type2_0.5", Type2, 0.5, 0.01, false),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Problem templates; the k-sweep builds its own from `nu_d` and `nus` when empty.
    pub specs: Vec<SpecTemplate>,
    pub alphas: Vec<f64>,
    pub dims: Vec<usize>,
    pub ks: Vec<usize>,
    /// Extra dimensions and inner sizes run only with `include_large`.
    pub large_dims: Vec<usize>,
    pub large_ks: Vec<usize>,
    pub include_large: bool,
    /// Elastic-net weight on `D` for the k-sweep.
    pub nu_d: f64,
    /// Elastic-net weights on `H` for the k-sweep.
    pub nus: Vec<f64>,
    /// Number of samples `T` for generated data.
    pub samples: usize,
    pub n_inits: usize,
    /// Mean of the initial factor entries per trial; empty means all zero.
    pub init_means: Vec<f64>,
    /// Standard deviation of initial entries; `None` means `1/sqrt(k)`.
    pub init_sd: Option<f64>,
    /// Explicit per-trial init seeds; `None` derives them from `seed`.
    pub init_seeds: Option<Vec<u64>>,
    /// Independent data draws averaged by the k-sweep.
    pub repetitions: usize,
    /// Entry threshold for the solution difference.
    pub solution_threshold: f64,
    pub data: DataSource,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub solver: SolverConfig,
    pub incremental: IncrementalSettings,
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let base = Self {
            kind,
            specs: vec![SpecTemplate::preset("subspace").expect("preset")],
            alphas: vec![0.5],
            dims: vec![10],
            ks: vec![5],
            large_dims: Vec::new(),
            large_ks: Vec::new(),
            include_large: false,
            nu_d: 0.5,
            nus: Vec::new(),
            samples: 100,
            n_inits: 1,
            init_means: Vec::new(),
            init_sd: None,
            init_seeds: None,
            repetitions: 1,
            solution_threshold: dlm_core::metrics::DEFAULT_SOLUTION_THRESHOLD,
            data: DataSource::Gaussian { mean: 0.0, sd: 1.0 },
            seed: 0,
            output: None,
            solver: SolverConfig::default(),
            incremental: IncrementalSettings::default(),
        };
        match kind {
            ExperimentKind::MultiInit => Self {
                specs: PRESETS.iter().map(|p| SpecTemplate::preset(p).expect("preset")).collect(),
                alphas: vec![0.005, 0.05, 0.5],
                dims: vec![5, 10],
                ks: vec![3, 5],
                large_dims: vec![50],
                large_ks: vec![10],
                n_inits: 10,
                init_means: (0..10).map(|i| 5.0 * i as f64).collect(),
                init_sd: Some(1.0),
                solver: SolverConfig { max_iters: 200_000, ..SolverConfig::default() },
                ..base
            },
            ExperimentKind::KSweep => Self {
                specs: Vec::new(),
                alphas: vec![K_SWEEP_ALPHA],
                dims: vec![50],
                ks: vec![5, 10, 25, 50],
                nus: vec![0.0, 0.5, 1.0],
                n_inits: 10,
                solver: SolverConfig { max_iters: K_SWEEP_MAX_ITERS, ..SolverConfig::default() },
                ..base
            },
            ExperimentKind::IncrementalCompare => Self { alphas: vec![0.05], dims: vec![50], ks: vec![50], ..base },
            ExperimentKind::Solve | ExperimentKind::Certify => base,
        }
    }

    /// Parses a JSON config, filling absent fields from the defaults of its kind.
    ///
    /// A run manifest is accepted as well; its `config` object is used.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: Value = serde_json::from_str(text)?;
        if let Some(inner) = value.get("config").filter(|v| v.is_object()) {
            value = inner.clone();
        }
        let kind: ExperimentKind = match value.get("kind") {
            Some(k) => serde_json::from_value(k.clone())?,
            None => return Err(config("config needs a \"kind\" field")),
        };
        let mut merged = serde_json::to_value(Self::defaults(kind))?;
        merge(&mut merged, value);
        let cfg: Self = serde_json::from_value(merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Dimension grid with the optional large cells appended.
    pub fn dim_grid(&self) -> Vec<usize> {
        grid(&self.dims, &self.large_dims, self.include_large)
    }

    pub fn k_grid(&self) -> Vec<usize> {
        grid(&self.ks, &self.large_ks, self.include_large)
    }

    /// Templates to run; the k-sweep derives elastic nets from `nu_d` and `nus`.
    pub fn spec_templates(&self) -> Vec<SpecTemplate> {
        if self.kind == ExperimentKind::KSweep && self.specs.is_empty() {
            self.nus.iter().map(|nu_h| SpecTemplate::elastic_net(self.nu_d, *nu_h)).collect()
        } else {
            self.specs.clone()
        }
    }

    /// Mean of the initial entries for `trial`.
    pub fn init_mean(&self, trial: usize) -> f64 {
        self.init_means.get(trial).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.spec_templates().is_empty() {
            return Err(config("at least one spec is required"));
        }
        if self.alphas.is_empty() || self.ks.is_empty() {
            return Err(config("alpha and k grids must be nonempty"));
        }
        if self.dims.is_empty() && matches!(self.data, DataSource::Gaussian { .. }) {
            return Err(config("dimension grid must be nonempty"));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(config(format!("alpha must be finite and non-negative, got {a}")));
        }
        if self.dim_grid().contains(&0) || self.k_grid().contains(&0) || self.samples == 0 {
            return Err(config("dimensions, k and samples must be positive"));
        }
        if self.n_inits == 0 || self.repetitions == 0 {
            return Err(config("n_inits and repetitions must be positive"));
        }
        if self.kind == ExperimentKind::MultiInit && self.n_inits < 2 {
            return Err(config(format!("multi_init needs at least 2 inits, got {}", self.n_inits)));
        }
        if !self.init_means.is_empty() && self.init_means.len() != self.n_inits {
            return Err(config(format!("{} init means given for {} inits", self.init_means.len(), self.n_inits)));
        }
        if let Some(seeds) = &self.init_seeds {
            if seeds.len() != self.n_inits {
                return Err(config(format!("{} init seeds given for {} inits", seeds.len(), self.n_inits)));
            }
        }
        if self.kind == ExperimentKind::KSweep {
            if self.specs.is_empty() && self.nus.is_empty() {
                return Err(config("k_sweep needs nu values"));
            }
            if let Some(k) = self.k_grid().iter().find(|k| **k > self.samples) {
                return Err(config(format!("k = {k} exceeds the {} samples", self.samples)));
            }
        }
        if self.kind == ExperimentKind::IncrementalCompare && self.incremental.arms.is_empty() {
            return Err(config("incremental_compare needs at least one arm"));
        }
        if let DataSource::Gaussian { sd, .. } = self.data {
            if !(sd > 0.0) {
                return Err(config(format!("data sd must be positive, got {sd}")));
            }
        }
        if !(self.solution_threshold >= 0.0) {
            return Err(config("solution_threshold must be non-negative"));
        }
        for t in self.spec_templates() {
            t.problem(self.alphas[0], self.ks[0]).validate()?;
        }
        self.solver.validate()?;
        Ok(())
    }
}

/// Regularization weight of the k-sweep.
pub const K_SWEEP_ALPHA: f64 = 0.05;
pub const K_SWEEP_MAX_ITERS: usize = 20_000;

fn grid(base: &[usize], large: &[usize], include_large: bool) -> Vec<usize> {
    let mut out = base.to_vec();
    if include_large {
        out.extend(large.iter().filter(|v| !base.contains(v)));
    }
    out
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (key, v) in o {
                match b.get_mut(&key) {
                    // tagged enums are replaced whole so fields of another variant do not leak in
                    Some(slot) if slot.is_object() && v.is_object() && !is_tagged(slot) => merge(slot, v),
                    _ => {
                        b.insert(key, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn is_tagged(v: &Value) -> bool {
    ["kind", "source", "method"].iter().any(|t| v.get(t).is_some())
}
