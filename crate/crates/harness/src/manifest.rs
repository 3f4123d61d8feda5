//! Run manifests: the resolved configuration plus versions, outputs and timings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub label: String,
    /// Monotonic wall-clock seconds.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub command: String,
    pub threads: usize,
    /// Fully resolved configuration; passing the manifest back with `--config` reruns it.
    pub config: ExperimentConfig,
    /// Output files relative to the output directory.
    pub outputs: Vec<String>,
    pub timings: Vec<Timing>,
    /// Numerical failures recorded without aborting the run.
    #[serde(default)]
    pub failures: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig, threads: usize) -> Self {
        Self {
            tool: "dlm-opt".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            core_version: dlm_core::VERSION.into(),
            command: command.into(),
            threads,
            config: config.clone(),
            outputs: Vec::new(),
            timings: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn time(&mut self, label: impl Into<String>, seconds: f64) {
        self.timings.push(Timing { label: label.into(), seconds });
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentKind;

    #[test]
    fn manifest_reloads_as_config() {
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::KSweep);
        cfg.seed = 42;
        let mut m = RunManifest::new("k-sweep", &cfg, 2);
        m.time("total", 1.5);
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }
}
