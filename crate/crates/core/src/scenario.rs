//! Named plant configurations.
//!
//! Names follow the `XCYF` convention: X compressors and a forecast horizon
//! of Y timesteps. Three-compressor presets combine one fixed-speed unit with
//! two variable-speed units.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::BandControllerConfig;
use crate::env::{
    generate_demand, DemandPattern, DemandProfile, DemandShape, Environment, ObservationLayout, RewardConfig,
    RewardWeights,
};
use crate::error::{Error, Result};
use crate::plant::{CompressorSpec, SystemConfig};

pub const PRESET_NAMES: [&str; 4] = ["1C1F", "3C1F", "3C3F", "3C5F"];

/// Default episode length: one simulated hour at 5 s steps.
pub const DEFAULT_EPISODE_LEN: usize = 720;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub system: SystemConfig,
    pub reward: RewardWeights,
    /// Forecast horizon Y.
    pub horizon: usize,
    /// Forecast normalization ceiling, m³/s.
    pub demand_ceiling: f64,
    pub episode_len: usize,
    pub demand_pattern: DemandPattern,
    pub demand_shape: DemandShape,
    /// Training episodes start at a pressure drawn uniformly from this range.
    pub train_initial_pressure: [f64; 2],
    /// Evaluation episodes start here.
    pub eval_initial_pressure: f64,
    pub baseline: BandControllerConfig,
}

fn base_system(compressors: Vec<CompressorSpec>) -> SystemConfig {
    SystemConfig {
        compressors,
        storage_volume: 5.0,
        p_min: 7.0,
        p_max: 8.5,
        p_ref: 8.0,
        dt: 5.0,
        electricity_price: 0.30,
    }
}

impl Scenario {
    pub fn preset(name: &str) -> Result<Self> {
        let (compressors, horizon) = match name.to_ascii_uppercase().as_str() {
            "1C1F" => (vec![CompressorSpec::variable_speed(1, 30.0, 0.01, 0.2)], 1),
            "3C1F" => (three_units(), 1),
            "3C3F" => (three_units(), 3),
            "3C5F" => (three_units(), 5),
            _ => {
                return Err(Error::Config(format!(
                    "unknown scenario '{name}' (presets: {})",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        let system = base_system(compressors);
        let demand_ceiling = system.total_capacity();
        let scenario = Self {
            name: name.to_ascii_uppercase(),
            system,
            reward: RewardWeights::default(),
            horizon,
            demand_ceiling,
            episode_len: DEFAULT_EPISODE_LEN,
            demand_pattern: DemandPattern::Mixed,
            demand_shape: DemandShape::default(),
            train_initial_pressure: [6.5, 9.0],
            eval_initial_pressure: 8.0,
            baseline: BandControllerConfig::default(),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.reward_config().validate()?;
        self.demand_shape.validate()?;
        self.baseline.validate(&self.system)?;
        if self.horizon == 0 {
            return Err(Error::Config("forecast horizon must be >= 1".into()));
        }
        if !(self.demand_ceiling > 0.0 && self.demand_ceiling.is_finite()) {
            return Err(Error::Config(format!("demand ceiling must be > 0, got {}", self.demand_ceiling)));
        }
        if self.episode_len == 0 {
            return Err(Error::Config("episode length must be > 0".into()));
        }
        let [lo, hi] = self.train_initial_pressure;
        let band = 0.5 * self.system.p_min..=1.5 * self.system.p_max;
        if !(lo <= hi && band.contains(&lo) && band.contains(&hi)) {
            return Err(Error::Config(format!("invalid training initial pressure range [{lo}, {hi}]")));
        }
        if !band.contains(&self.eval_initial_pressure) {
            return Err(Error::Config(format!(
                "evaluation initial pressure {} outside the simulation band",
                self.eval_initial_pressure
            )));
        }
        Ok(())
    }

    pub fn n_compressors(&self) -> usize {
        self.system.compressors.len()
    }

    pub fn layout(&self) -> ObservationLayout {
        ObservationLayout {
            horizon: self.horizon,
            n_compressors: self.n_compressors(),
            p_ref: self.system.p_ref,
            demand_ceiling: self.demand_ceiling,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.layout().width()
    }

    pub fn act_dim(&self) -> usize {
        self.n_compressors()
    }

    /// Fixed per-feature standardization applied inside the network: the
    /// pressure band `[p_min, p_max]` and the unit interval of forecasts and
    /// levels are both mapped to roughly `[-1, 1]`.
    pub fn input_normalization(&self) -> (Vec<f64>, Vec<f64>) {
        let layout = self.layout();
        let band = (self.system.p_max - self.system.p_min) / 2.0;
        let centre = layout.normalize_pressure(self.system.p_min + band);
        let mut shift = vec![0.5; layout.width()];
        let mut gain = vec![2.0; layout.width()];
        shift[0] = centre;
        gain[0] = self.system.p_ref / band;
        (shift, gain)
    }

    pub fn reward_config(&self) -> RewardConfig {
        RewardConfig::new(&self.reward, &self.system)
    }

    /// Fingerprint of everything a trained network depends on: the plant,
    /// the forecast horizon and the forecast normalization.
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct Fingerprint<'a> {
            system: &'a SystemConfig,
            horizon: usize,
            demand_ceiling: f64,
        }
        let json = serde_json::to_vec(&Fingerprint {
            system: &self.system,
            horizon: self.horizon,
            demand_ceiling: self.demand_ceiling,
        })
        .expect("plain data serializes");
        Sha256::digest(json).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Synthetic demand long enough for `episodes` back-to-back episodes.
    pub fn synthetic_demand(&self, seed: u64, len: usize) -> Result<DemandProfile> {
        generate_demand(seed, len, self.demand_pattern, &self.demand_shape, self.demand_ceiling)
    }

    /// Samples needed per episode (episode plus the trailing forecast window).
    pub fn episode_samples(&self) -> usize {
        self.episode_len + self.horizon
    }

    pub fn environment(&self, profile: DemandProfile, initial_pressure: f64) -> Result<Environment> {
        Environment::new(
            self.system.clone(),
            self.reward_config(),
            self.layout(),
            self.episode_len,
            profile,
            initial_pressure,
        )
    }
}

fn three_units() -> Vec<CompressorSpec> {
    vec![
        CompressorSpec::fixed_speed(1, 30.0, 0.01, 6),
        CompressorSpec::variable_speed(2, 30.0, 0.01, 0.25),
        CompressorSpec::variable_speed(3, 30.0, 0.01, 0.25),
    ]
}
