use std::path::{Path, PathBuf};

use gig_core::model::{ModelConfig, Setting};
use gig_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable naming the root for relative output paths.
pub const OUT_ENV: &str = "GIG_OUT";

/// Resolves a relative output path against `GIG_OUT` when it is set.
pub fn output_path(p: &Path) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(root) if p.is_relative() => Path::new(&root).join(p),
        _ => p.to_path_buf(),
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_settings() -> Vec<String> {
    Setting::ALL.iter().map(|s| s.label().to_string()).collect()
}

/// Experiment description shared by `train`, `ablate` and `cross-domain`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Data directories written by `build-data`.
    pub data: Vec<PathBuf>,
    pub output: PathBuf,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Ablation rows: any of `baseline`, `a`, `b`, `c`, `full`.
    #[serde(default = "default_settings")]
    pub settings: Vec<String>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.data.is_empty() {
            return Err(CliError::Usage("config: `data` must list at least one data directory".into()));
        }
        for d in &self.data {
            if !d.join("corpus.txt").is_file() {
                return Err(CliError::Usage(format!(
                    "config: {} is not a data directory (run build-data first)",
                    d.display()
                )));
            }
        }
        if self.seeds.is_empty() {
            return Err(CliError::Usage("config: `seeds` must not be empty".into()));
        }
        self.parsed_settings()?;
        self.model.validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn parsed_settings(&self) -> Result<Vec<Setting>, CliError> {
        if self.settings.is_empty() {
            return Err(CliError::Usage("config: `settings` must not be empty".into()));
        }
        self.settings
            .iter()
            .map(|s| {
                Setting::from_label(s).ok_or_else(|| {
                    CliError::Usage(format!("config: unknown setting {s:?} (expected baseline, a, b, c or full)"))
                })
            })
            .collect()
    }

    pub fn output_dir(&self) -> PathBuf {
        output_path(&self.output)
    }
}
