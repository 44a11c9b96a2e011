//! Pressure-band cascade controller used as the comparison reference.
//!
//! * `p >= p_high`: every unit off.
//! * `p < p_low`: units are engaged at full output in cascade order until
//!   their combined capacity covers the demand estimate (the first unit is
//!   always engaged).
//! * Inside the band, variable-speed units follow `gain * (p_high - p)`,
//!   clamped to `[0, 1]`. Fixed-speed units that are on stay on until the
//!   pressure rises above `p_low + (p_high - p_low) / 2`; units that are off
//!   stay off until the pressure falls below `p_low`.
//!
//! The on/off memory is read from the plant state's levels, so the controller
//! is a pure function of `(pressure, demand estimate, previous levels)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{CompressorSpec, PlantState, SystemConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandControllerConfig {
    /// bar; units start below this pressure.
    pub p_low: f64,
    /// bar; all units stop at or above this pressure.
    pub p_high: f64,
    /// Compressor indices in engagement order. Empty means natural order.
    #[serde(default)]
    pub cascade: Vec<usize>,
    /// Variable-speed proportional gain, setpoint fraction per bar.
    pub gain: f64,
}

impl Default for BandControllerConfig {
    fn default() -> Self {
        Self { p_low: 7.9, p_high: 8.1, cascade: Vec::new(), gain: 5.0 }
    }
}

impl BandControllerConfig {
    pub fn validate(&self, system: &SystemConfig) -> Result<()> {
        if !(system.p_min <= self.p_low && self.p_low < self.p_high && self.p_high <= system.p_max) {
            return Err(Error::Config(format!(
                "band controller needs p_min <= p_low < p_high <= p_max, got {} <= {} < {} <= {}",
                system.p_min, self.p_low, self.p_high, system.p_max
            )));
        }
        if !(self.gain >= 0.0 && self.gain.is_finite()) {
            return Err(Error::Config(format!("band controller gain must be >= 0, got {}", self.gain)));
        }
        let n = system.compressors.len();
        if !self.cascade.is_empty() {
            let mut seen = vec![false; n];
            for &i in &self.cascade {
                if i >= n || seen[i] {
                    return Err(Error::Config(format!(
                        "cascade must be a permutation of 0..{n}, got {:?}",
                        self.cascade
                    )));
                }
                seen[i] = true;
            }
            if seen.iter().any(|s| !s) {
                return Err(Error::Config(format!("cascade must list every compressor, got {:?}", self.cascade)));
            }
        }
        Ok(())
    }

    /// Pressure above which a running fixed-speed unit is stopped.
    pub fn fixed_off_pressure(&self) -> f64 {
        self.p_low + 0.5 * (self.p_high - self.p_low)
    }

    fn order(&self, n: usize) -> Vec<usize> {
        if self.cascade.is_empty() {
            (0..n).collect()
        } else {
            self.cascade.clone()
        }
    }
}

/// Setpoints of the band controller for one timestep.
pub fn baseline_action(
    state: &PlantState,
    demand_estimate: f64,
    specs: &[CompressorSpec],
    config: &BandControllerConfig,
) -> Vec<f64> {
    let p = state.pressure;
    let n = specs.len();
    if p >= config.p_high {
        return vec![0.0; n];
    }
    let proportional = (config.gain * (config.p_high - p)).clamp(0.0, 1.0);
    let was_on = |i: usize| state.levels.get(i).is_some_and(|&l| l > 0.0);
    let mut setpoints: Vec<f64> = specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            if spec.is_fixed_speed() {
                if was_on(i) && p <= config.fixed_off_pressure() {
                    1.0
                } else {
                    0.0
                }
            } else {
                proportional
            }
        })
        .collect();
    if p < config.p_low {
        let mut supply = 0.0;
        for (rank, i) in config.order(n).into_iter().enumerate() {
            if rank > 0 && supply >= demand_estimate {
                break;
            }
            setpoints[i] = 1.0;
            supply += specs[i].max_flow;
        }
    }
    setpoints
}
