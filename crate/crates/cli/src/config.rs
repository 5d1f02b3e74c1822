//! Experiment configuration: a TOML file with a dataset spec, a model
//! template and the sigma × seed grid.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use condind_core::{FactorSpec, VaeConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub dataset: FactorSpec,
    /// Template for every run; `sigma` and `seed` are overwritten per run.
    #[serde(default)]
    pub model: VaeConfig,
    #[serde(default = "default_sigma_grid")]
    pub sigma_grid: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_sigma_grid() -> Vec<f64> {
    vec![0.0, 0.9]
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: FactorSpec::default(),
            model: VaeConfig::default(),
            sigma_grid: default_sigma_grid(),
            seeds: default_seeds(),
            output_dir: default_output_dir(),
        }
    }
}

/// One cell of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSpec {
    pub sigma: f64,
    pub seed: u64,
    pub model: VaeConfig,
}

impl RunSpec {
    /// File stem of this run's record, e.g. `sigma=0.9_seed=3`.
    pub fn stem(&self) -> String {
        format!("sigma={}_seed={}", self.sigma, self.seed)
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let field = |name: &str, msg: String| Err(CliError::Config(format!("{name}: {msg}")));
        if self.sigma_grid.is_empty() {
            return field("sigma_grid", "must not be empty".into());
        }
        for (i, s) in self.sigma_grid.iter().enumerate() {
            if !(0.0..1.0).contains(s) {
                return field(&format!("sigma_grid[{i}]"), format!("{s} is outside [0, 1)"));
            }
        }
        if self.seeds.is_empty() {
            return field("seeds", "must not be empty".into());
        }
        let mut seen = HashSet::new();
        for s in &self.seeds {
            if !seen.insert(s) {
                return field("seeds", format!("seed {s} appears twice"));
            }
        }
        self.dataset.validate().or_else(|e| field("dataset", e.to_string()))?;
        // Per-run fields are checked on a representative cell.
        VaeConfig {
            sigma: self.sigma_grid[0],
            ..self.model
        }
        .validate()
        .or_else(|e| field("model", e.to_string()))?;
        Ok(())
    }

    /// Grid cells, sigma-major in config order.
    pub fn runs(&self) -> Vec<RunSpec> {
        self.sigma_grid
            .iter()
            .flat_map(|&sigma| {
                self.seeds.iter().map(move |&seed| RunSpec {
                    sigma,
                    seed,
                    model: VaeConfig {
                        sigma,
                        seed,
                        ..self.model
                    },
                })
            })
            .collect()
    }
}

/// SHA-256 of the canonical JSON of everything that determines a run's
/// result: the dataset spec and the per-run model config.
///
/// `serde_json` objects keep keys sorted, so the hash does not depend on
/// field order in the source file.
pub fn run_hash(dataset: &FactorSpec, model: &VaeConfig) -> String {
    let value = serde_json::json!({ "dataset": dataset, "model": model });
    let canonical = serde_json::to_string(&value).expect("config serializes");
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
