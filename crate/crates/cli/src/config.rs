//! Experiment configuration files and seed resolution.

use std::fs;
use std::path::Path;

use attractorlab::analysis::TsneConfig;
use attractorlab::dynsys::LorenzParams;
use attractorlab::eval::EvalSettings;
use attractorlab::lstm::MemoryMode;
use attractorlab::sampling::{DatasetSpec, Strategy};
use attractorlab::training::TrainConfig;
use attractorlab::{Error, Result};
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "ATTRACTORLAB_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleSettings {
    pub models: usize,
    pub strategies: Vec<Strategy>,
    pub memory: Vec<MemoryMode>,
    pub workers: usize,
    pub save_models: bool,
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        EnsembleSettings {
            models: 20,
            strategies: Strategy::GRID.to_vec(),
            memory: vec![MemoryMode::Zero, MemoryMode::Gaussian],
            workers: 1,
            save_models: false,
        }
    }
}

/// Everything a run depends on. Files mirror this structure field for
/// field; command-line flags override individual fields.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub system: LorenzParams,
    pub dataset: DatasetSpec,
    pub train: TrainConfig,
    pub eval: EvalSettings,
    pub ensemble: EnsembleSettings,
    pub tsne: TsneConfig,
    /// Root from which every other seed is derived.
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    /// Reads TOML or JSON, chosen by extension (`.json` is JSON, anything
    /// else TOML).
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            Ok(serde_json::from_str(&text)?)
        } else {
            toml::from_str(&text).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })
        }
    }
}

/// Flag, then config file, then the environment, then 0.
pub fn resolve_seed(flag: Option<u64>, cfg: Option<u64>) -> Result<u64> {
    if let Some(s) = flag.or(cfg) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}
