//! TOML run configuration.
//!
//! A file names a preset and overrides parts of it. Every section is
//! optional and unknown keys are rejected.
//!
//! ```toml
//! preset = "3C1F"
//!
//! [reward]                 # replaces the preset weights
//! alpha_penalty = 10.0
//! underpressure_penalty = 10.0
//! switch_penalty_weight = 0.05
//!
//! [observation]
//! horizon = 3
//! demand_ceiling = 0.03    # m³/s
//!
//! [episode]
//! len = 720
//! train_initial_pressure = [6.5, 9.0]
//! eval_initial_pressure = 8.0
//!
//! [demand]
//! pattern = "Mixed"        # DailyWave | StepLoads | Mixed
//! [demand.shape]
//! base_fraction = 0.5
//!
//! [baseline]
//! p_low = 7.9
//! p_high = 8.1
//! cascade = []
//! gain = 5.0
//!
//! [train]                  # any TrainConfig field
//! max_iterations = 200
//!
//! [explain]                # any ExplainConfig field
//! n_background = 1024
//! ```
//!
//! A `[system]` section replaces the whole plant (all `SystemConfig` fields,
//! with `[[system.compressors]]` tables).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::BandControllerConfig;
use crate::env::{DemandPattern, DemandShape, RewardWeights};
use crate::error::{Error, Result};
use crate::explain::ExplainConfig;
use crate::plant::SystemConfig;
use crate::ppo::TrainConfig;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSection {
    pub horizon: Option<usize>,
    pub demand_ceiling: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeSection {
    pub len: Option<usize>,
    pub train_initial_pressure: Option<[f64; 2]>,
    pub eval_initial_pressure: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSection {
    pub pattern: Option<DemandPattern>,
    pub shape: Option<DemandShape>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<String>,
    pub system: Option<SystemConfig>,
    pub reward: Option<RewardWeights>,
    #[serde(default)]
    pub observation: ObservationSection,
    #[serde(default)]
    pub episode: EpisodeSection,
    #[serde(default)]
    pub demand: DemandSection,
    pub baseline: Option<BandControllerConfig>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub explain: ExplainConfig,
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub train: TrainConfig,
    pub explain: ExplainConfig,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies the overrides on top of a preset. `preset` wins over the
    /// file's own `preset` key; with neither, 1C1F is used.
    pub fn resolve(&self, preset: Option<&str>) -> Result<RunConfig> {
        let name = preset.or(self.preset.as_deref()).unwrap_or("1C1F");
        let mut s = Scenario::preset(name)?;
        if let Some(system) = &self.system {
            s.system = system.clone();
            s.demand_ceiling = system.total_capacity();
            s.baseline.cascade.retain(|&i| i < system.compressors.len());
        }
        if let Some(reward) = &self.reward {
            s.reward = reward.clone();
        }
        if let Some(h) = self.observation.horizon {
            s.horizon = h;
        }
        if let Some(c) = self.observation.demand_ceiling {
            s.demand_ceiling = c;
        }
        if let Some(len) = self.episode.len {
            s.episode_len = len;
        }
        if let Some(range) = self.episode.train_initial_pressure {
            s.train_initial_pressure = range;
        }
        if let Some(p) = self.episode.eval_initial_pressure {
            s.eval_initial_pressure = p;
        }
        if let Some(pattern) = self.demand.pattern {
            s.demand_pattern = pattern;
        }
        if let Some(shape) = &self.demand.shape {
            s.demand_shape = shape.clone();
        }
        if let Some(b) = &self.baseline {
            s.baseline = b.clone();
        }
        s.validate()?;
        self.train.validate()?;
        self.explain.validate()?;
        Ok(RunConfig { scenario: s, train: self.train.clone(), explain: self.explain.clone() })
    }
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        ConfigFile::default().resolve(Some(name))
    }

    /// sha256 of the resolved configuration's JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("plain data serializes");
        Sha256::digest(json).iter().map(|b| format!("{b:02x}")).collect()
    }
}
