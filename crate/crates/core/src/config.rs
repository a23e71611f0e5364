//! Run configuration file (TOML).
//!
//! Every section is optional; missing keys take their defaults. Random
//! streams are derived from the top-level `seed` (see [`crate::seed`]) unless
//! overridden in `[seeds]`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ctgraph::CtGraphConfig;
use crate::error::{Error, Result};
use crate::evolve::EvolutionConfig;
use crate::features::{TrainConfig, DEFAULT_LAYER_SIZES, DEFAULT_LEARNING_RATE};
use crate::harness::{HarnessConfig, TrialConfig};
use crate::seed;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesSection {
    pub layer_sizes: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Copies of each distinct observation in the training set.
    pub replicas: usize,
    /// Fail pretraining if the final per-pixel MSE is above this.
    pub mse_ceiling: f64,
    /// Pretrained artifact to use instead of `<output_dir>/autoencoder.json`.
    pub load_path: Option<PathBuf>,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        Self {
            layer_sizes: DEFAULT_LAYER_SIZES.to_vec(),
            epochs: 5000,
            learning_rate: DEFAULT_LEARNING_RATE,
            replicas: 1,
            mse_ceiling: 0.01,
            load_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckpointSection {
    /// Save population and best genome every this many generations (0: never).
    pub every: usize,
}

impl Default for CheckpointSection {
    fn default() -> Self {
        Self { every: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub trials: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self { trials: 20 }
    }
}

/// Explicit overrides of the derived sub-seeds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedsSection {
    pub obs_seed: Option<u64>,
    pub features_seed: Option<u64>,
    pub evolution_seed: Option<u64>,
    pub eval_seed: Option<u64>,
    pub analysis_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub environment: CtGraphConfig,
    pub features: FeaturesSection,
    pub evolution: EvolutionConfig,
    pub harness: TrialConfig,
    pub checkpoint: CheckpointSection,
    pub analysis: AnalysisSection,
    pub seeds: SeedsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            environment: CtGraphConfig::default(),
            features: FeaturesSection::default(),
            evolution: EvolutionConfig::default(),
            harness: TrialConfig::default(),
            checkpoint: CheckpointSection::default(),
            analysis: AnalysisSection::default(),
            seeds: SeedsSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        if config.version != CONFIG_VERSION {
            return Err(Error::Version {
                found: config.version,
                expected: CONFIG_VERSION,
            });
        }
        if config.environment.obs_seed != 0 || config.evolution.rng_seed != 0 {
            return Err(Error::Config(
                "set environment.obs_seed / evolution.rng_seed through the [seeds] section".into(),
            ));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Fill derived seeds into the nested configs and validate everything.
    pub fn resolve(mut self) -> Result<Self> {
        let s = self.seed;
        let pick = |o: Option<u64>, label: &str| o.unwrap_or_else(|| seed::derive(s, &[label]));
        self.seeds = SeedsSection {
            obs_seed: Some(pick(self.seeds.obs_seed, seed::ENV_GEN)),
            features_seed: Some(pick(self.seeds.features_seed, seed::FEATURES)),
            evolution_seed: Some(pick(self.seeds.evolution_seed, seed::EVOLUTION)),
            eval_seed: Some(pick(self.seeds.eval_seed, seed::EVAL)),
            analysis_seed: Some(pick(self.seeds.analysis_seed, "analysis")),
        };
        self.environment.obs_seed = self.seeds.obs_seed.unwrap();
        self.evolution.rng_seed = self.seeds.evolution_seed.unwrap();
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.environment.validate()?;
        self.harness.validate()?;
        self.evolution.validate()?;
        let f = &self.features;
        if !(f.learning_rate.is_finite() && f.learning_rate > 0.0) {
            return Err(Error::Config("features.learning_rate must be > 0".into()));
        }
        if f.layer_sizes.first() != Some(&self.environment.num_pixels()) {
            return Err(Error::Config(format!(
                "features.layer_sizes must start with {} (obs_side^2)",
                self.environment.num_pixels()
            )));
        }
        Ok(())
    }

    pub fn harness_config(&self) -> HarnessConfig {
        HarnessConfig {
            env: self.environment.clone(),
            trial: self.harness.clone(),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            layer_sizes: self.features.layer_sizes.clone(),
            learning_rate: self.features.learning_rate,
            epochs: self.features.epochs,
            seed: self.seeds.features_seed.unwrap_or_else(|| seed::derive(self.seed, &[seed::FEATURES])),
        }
    }

    pub fn eval_seeds(&self, trials: usize) -> Vec<u64> {
        let base = self.seeds.eval_seed.unwrap_or_else(|| seed::derive(self.seed, &[seed::EVAL]));
        (0..trials as u64).map(|t| seed::derive_index(base, t)).collect()
    }

    pub fn analysis_seed(&self) -> u64 {
        self.seeds.analysis_seed.unwrap_or_else(|| seed::derive(self.seed, &["analysis"]))
    }
}
