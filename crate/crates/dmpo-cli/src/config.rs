//! Experiment configuration: one TOML document per experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dmpo_core::trainer::EvalSettings;
use dmpo_core::{EnvSpec, Error, NoiseSpec, Result, Setting, TrainConfig};

/// A full experiment description. Rerunning an unchanged config reproduces
/// every output byte for byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub setting: Setting,
    pub train: TrainConfig,
    pub dataset: DatasetConfig,
    pub output_dir: PathBuf,
    /// Evaluation rollouts between epochs.
    #[serde(default)]
    pub eval: EvalSettings,
    /// Extra parameters for the sweep subcommand.
    #[serde(default)]
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_pairs: usize,
    /// Lose-length bucket ceilings; pairs split evenly across buckets.
    #[serde(default)]
    pub buckets: Option<Vec<usize>>,
    #[serde(default)]
    pub noise: NoiseSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Discount grid for the gamma axis.
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    /// Bucket ceilings for the length axis.
    #[serde(default = "default_buckets")]
    pub buckets: Vec<usize>,
    /// Seeds train.seed, train.seed+1, ... for every sweep cell.
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
}

fn default_gammas() -> Vec<f64> {
    vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99]
}

fn default_buckets() -> Vec<usize> {
    vec![4, 8, 12]
}

fn default_n_seeds() -> usize {
    5
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            gammas: default_gammas(),
            buckets: default_buckets(),
            n_seeds: default_n_seeds(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.dataset.noise.validate()?;
        if self.dataset.n_pairs == 0 {
            return Err(Error::Validation("dataset.n_pairs must be >= 1".into()));
        }
        if let Some(buckets) = &self.dataset.buckets {
            if buckets.is_empty() || !self.dataset.n_pairs.is_multiple_of(buckets.len()) {
                return Err(Error::Validation(
                    "dataset.buckets must be nonempty and divide n_pairs evenly".into(),
                ));
            }
        }
        if self.sweep.gammas.is_empty() || self.sweep.n_seeds == 0 {
            return Err(Error::Validation("sweep needs gammas and n_seeds".into()));
        }
        Ok(())
    }

    /// Seeds used for sweep cells.
    pub fn sweep_seeds(&self) -> Vec<u64> {
        (0..self.sweep.n_seeds as u64)
            .map(|i| self.train.seed.wrapping_add(i))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
output_dir = "runs/demo"
setting = "clean"

[env]
name = "chain"
n_states = 10
slip = 0.1
max_horizon = 8

[train]
beta = 0.1
gamma = 0.5
learning_rate = 0.1
epochs = 50
batch_size = 32
seed = 7
loss_kind = "dmpo"

[dataset]
n_pairs = 20
"#;

    #[test]
    fn sample_config_parses_with_defaults() {
        let config: ExperimentConfig = toml::from_str(SAMPLE).unwrap();
        config.validate().unwrap();
        assert_eq!(config.sweep.gammas.len(), 10);
        assert_eq!(config.sweep.n_seeds, 5);
        assert!(config.eval.temperature_zero);
        assert_eq!(config.dataset.noise.p_rep, 0.6);
        assert_eq!(config.sweep_seeds(), vec![7, 8, 9, 10, 11]);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let config: ExperimentConfig = toml::from_str(SAMPLE).unwrap();
        let text = toml::to_string(&config).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(
            serde_json::to_string(&config).unwrap(),
            serde_json::to_string(&back).unwrap()
        );
    }
}
