//! Physical model of the compressed-air plant.
//!
//! The storage tank follows an isothermal ideal-gas mass balance: over one
//! timestep the pressure changes in proportion to the net volume of air
//! pushed into the tank,
//!
//! ```text
//! p(t + dt) = p(t) + dV * p(t) / V_storage
//! ```
//!
//! where `dV` is measured at tank conditions. Pressures are absolute bar
//! everywhere in this crate.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Setpoint at or above which a fixed-speed unit is switched on.
pub const FIXED_SPEED_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressorKind {
    FixedSpeed,
    VariableSpeed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressorSpec {
    pub id: u32,
    pub kind: CompressorKind,
    /// Electrical power at full output, kW.
    pub rated_power: f64,
    /// Volumetric flow at full output, m³/s at tank conditions.
    pub max_flow: f64,
    /// Minimum stable output of a variable-speed unit as a fraction of `max_flow`.
    pub min_flow_fraction: f64,
    /// Polynomial coefficients (constant term first) mapping flow fraction to kW.
    pub power_curve: Vec<f64>,
    /// Manufacturer limit on on/off cycles per hour (fixed-speed units only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_switches_per_hour: Option<u32>,
}

/// Affine power curve with an idle offset expressed as a fraction of rated power.
pub fn affine_power_curve(rated_power: f64, idle_fraction: f64) -> Vec<f64> {
    vec![idle_fraction * rated_power, (1.0 - idle_fraction) * rated_power]
}

/// Default idle share of the affine power curve.
pub const DEFAULT_IDLE_FRACTION: f64 = 0.15;

impl CompressorSpec {
    pub fn fixed_speed(id: u32, rated_power: f64, max_flow: f64, max_switches_per_hour: u32) -> Self {
        Self {
            id,
            kind: CompressorKind::FixedSpeed,
            rated_power,
            max_flow,
            min_flow_fraction: 1.0,
            power_curve: affine_power_curve(rated_power, DEFAULT_IDLE_FRACTION),
            max_switches_per_hour: Some(max_switches_per_hour),
        }
    }

    pub fn variable_speed(id: u32, rated_power: f64, max_flow: f64, min_flow_fraction: f64) -> Self {
        Self {
            id,
            kind: CompressorKind::VariableSpeed,
            rated_power,
            max_flow,
            min_flow_fraction,
            power_curve: affine_power_curve(rated_power, DEFAULT_IDLE_FRACTION),
            max_switches_per_hour: None,
        }
    }

    pub fn is_fixed_speed(&self) -> bool {
        self.kind == CompressorKind::FixedSpeed
    }

    /// Switching budget per hour; zero for variable-speed units.
    pub fn switch_limit(&self) -> f64 {
        match self.kind {
            CompressorKind::FixedSpeed => f64::from(self.max_switches_per_hour.unwrap_or(0)),
            CompressorKind::VariableSpeed => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("compressor {}: {msg}", self.id)));
        if !(self.max_flow > 0.0 && self.max_flow.is_finite()) {
            return bad(format!("max_flow must be > 0, got {}", self.max_flow));
        }
        if !(self.rated_power > 0.0 && self.rated_power.is_finite()) {
            return bad(format!("rated_power must be > 0, got {}", self.rated_power));
        }
        if !(self.min_flow_fraction > 0.0 && self.min_flow_fraction <= 1.0) {
            return bad(format!(
                "min_flow_fraction must lie in (0, 1], got {}",
                self.min_flow_fraction
            ));
        }
        if self.power_curve.is_empty() || self.power_curve.iter().any(|c| !c.is_finite()) {
            return bad("power_curve needs at least one finite coefficient".into());
        }
        let at_full = eval_poly(&self.power_curve, 1.0);
        if (at_full - self.rated_power).abs() > 1e-9 * self.rated_power {
            return bad(format!(
                "power_curve(1.0) = {at_full} does not match rated_power {}",
                self.rated_power
            ));
        }
        // Non-negative power over the operating range; a dense grid is enough
        // for the low-order curves used in practice.
        if (0..=100).any(|k| eval_poly(&self.power_curve, k as f64 / 100.0) < 0.0) {
            return bad("power_curve is negative somewhere on [0, 1]".into());
        }
        match (self.kind, self.max_switches_per_hour) {
            (CompressorKind::FixedSpeed, None) => {
                bad("fixed-speed units need max_switches_per_hour".into())
            }
            (CompressorKind::VariableSpeed, Some(_)) => {
                bad("max_switches_per_hour only applies to fixed-speed units".into())
            }
            _ => Ok(()),
        }
    }
}

/// Horner evaluation, constant term first.
pub(crate) fn eval_poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub compressors: Vec<CompressorSpec>,
    /// Total storage volume including pipework, m³.
    pub storage_volume: f64,
    /// Lower operating pressure, bar absolute.
    pub p_min: f64,
    /// Hard upper limit, bar absolute.
    pub p_max: f64,
    /// Reference pressure for the overpressure penalty and observation normalization.
    pub p_ref: f64,
    /// Timestep, seconds.
    pub dt: f64,
    /// Constant electricity price, € per kWh.
    pub electricity_price: f64,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.compressors.is_empty() {
            return Err(Error::Config("at least one compressor is required".into()));
        }
        for c in &self.compressors {
            c.validate()?;
        }
        let mut ids: Vec<u32> = self.compressors.iter().map(|c| c.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.compressors.len() {
            return Err(Error::Config("compressor ids must be unique".into()));
        }
        if !(self.p_min > 0.0 && self.p_min < self.p_ref && self.p_ref <= self.p_max) {
            return Err(Error::Config(format!(
                "pressures must satisfy 0 < p_min < p_ref <= p_max, got {} / {} / {}",
                self.p_min, self.p_ref, self.p_max
            )));
        }
        if !(self.storage_volume > 0.0 && self.storage_volume.is_finite()) {
            return Err(Error::Config("storage_volume must be > 0".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config("dt must be > 0".into()));
        }
        if !(self.electricity_price >= 0.0 && self.electricity_price.is_finite()) {
            return Err(Error::Config("electricity_price must be >= 0".into()));
        }
        Ok(())
    }

    /// Sum of installed maximum flows, m³/s.
    pub fn total_capacity(&self) -> f64 {
        self.compressors.iter().map(|c| c.max_flow).sum()
    }

    pub fn largest_unit_flow(&self) -> f64 {
        self.compressors.iter().map(|c| c.max_flow).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// Tank pressure, bar absolute.
    pub pressure: f64,
    /// Delivered flow fraction per compressor.
    pub levels: Vec<f64>,
    /// Remaining switching budget per compressor; always 0 for variable-speed units.
    pub switch_allowance: Vec<f64>,
    pub step_index: usize,
}

impl PlantState {
    /// All compressors off, full switching budget.
    pub fn initial(config: &SystemConfig, pressure: f64) -> Self {
        Self {
            pressure,
            levels: vec![0.0; config.compressors.len()],
            switch_allowance: config.compressors.iter().map(|c| c.switch_limit()).collect(),
            step_index: 0,
        }
    }

    pub fn validate(&self, config: &SystemConfig) -> Result<()> {
        if !(self.pressure > 0.0 && self.pressure.is_finite()) {
            return Err(Error::Domain(format!("pressure must be > 0, got {}", self.pressure)));
        }
        let n = config.compressors.len();
        for (what, len) in [("levels", self.levels.len()), ("switch_allowance", self.switch_allowance.len())] {
            if len != n {
                return Err(Error::Shape { what: what.into(), expected: n, actual: len });
            }
        }
        for (spec, (&level, &allowance)) in config
            .compressors
            .iter()
            .zip(self.levels.iter().zip(&self.switch_allowance))
        {
            if !(0.0..=1.0).contains(&level) {
                return Err(Error::Domain(format!("level {level} outside [0, 1]")));
            }
            if spec.is_fixed_speed() && level != 0.0 && level != 1.0 {
                return Err(Error::Domain(format!(
                    "fixed-speed compressor {} has non-binary level {level}",
                    spec.id
                )));
            }
            if !(0.0..=spec.switch_limit()).contains(&allowance) {
                return Err(Error::Domain(format!(
                    "switch allowance {allowance} outside [0, {}]",
                    spec.switch_limit()
                )));
            }
        }
        Ok(())
    }
}

/// Tank pressure after exchanging `net_volume` m³ (at tank conditions).
///
/// Pure; the state is not modified.
pub fn pressure_step(state: &PlantState, net_volume: f64, config: &SystemConfig) -> Result<f64> {
    ensure_finite("pressure", state.pressure)?;
    ensure_finite("net volume", net_volume)?;
    ensure_finite("storage volume", config.storage_volume)?;
    if state.pressure <= 0.0 {
        return Err(Error::Domain(format!("pressure must be > 0, got {}", state.pressure)));
    }
    if config.storage_volume <= 0.0 {
        return Err(Error::Domain("storage volume must be > 0".into()));
    }
    Ok(state.pressure + net_volume * state.pressure / config.storage_volume)
}

/// Delivered flow for a normalized setpoint, m³/s.
pub fn compressor_flow(spec: &CompressorSpec, setpoint: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&setpoint) {
        return Err(Error::Domain(format!(
            "setpoint {setpoint} for compressor {} outside [0, 1]",
            spec.id
        )));
    }
    Ok(match spec.kind {
        CompressorKind::FixedSpeed if setpoint >= FIXED_SPEED_THRESHOLD => spec.max_flow,
        CompressorKind::FixedSpeed => 0.0,
        CompressorKind::VariableSpeed if setpoint < spec.min_flow_fraction => 0.0,
        CompressorKind::VariableSpeed => setpoint * spec.max_flow,
    })
}

/// Electrical power draw at a delivered flow fraction, kW. A unit that
/// delivers nothing is off and draws nothing.
pub fn compressor_power(spec: &CompressorSpec, flow_fraction: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&flow_fraction) {
        return Err(Error::Domain(format!(
            "flow fraction {flow_fraction} for compressor {} outside [0, 1]",
            spec.id
        )));
    }
    if flow_fraction == 0.0 {
        return Ok(0.0);
    }
    Ok(eval_poly(&spec.power_curve, flow_fraction).max(0.0))
}
