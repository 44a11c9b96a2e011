use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::shap::{shap_exact, AttributionResult};
use super::{check_width, DeterministicPolicy};
use crate::env::ObservationLayout;
use crate::error::{Error, Result};
use crate::plant::SystemConfig;

/// Mean absolute Shapley value per feature over a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalAttribution {
    pub features: Vec<String>,
    pub mean_abs_phi: Vec<f64>,
    /// One attribution per test state, in input order. These are also the
    /// points of the per-feature pattern scatter.
    pub attributions: Vec<AttributionResult>,
}

fn attribute_all(
    model: &dyn DeterministicPolicy,
    states: ArrayView2<f64>,
    background: ArrayView2<f64>,
) -> Result<Vec<AttributionResult>> {
    check_width(model, states.ncols(), "test state")?;
    (0..states.nrows()).into_par_iter().map(|i| shap_exact(model, states.row(i), background)).collect()
}

pub fn global_attribution(
    model: &dyn DeterministicPolicy,
    test: ArrayView2<f64>,
    background: ArrayView2<f64>,
    features: &[String],
) -> Result<GlobalAttribution> {
    if features.len() != test.ncols() {
        return Err(Error::Shape { what: "feature labels".into(), expected: test.ncols(), actual: features.len() });
    }
    if test.nrows() == 0 {
        return Err(Error::Config("test set is empty".into()));
    }
    let attributions = attribute_all(model, test, background)?;
    let n = attributions.len() as f64;
    let mean_abs_phi = (0..test.ncols()).map(|j| attributions.iter().map(|a| a.phi[j].abs()).sum::<f64>() / n).collect();
    Ok(GlobalAttribution { features: features.to_vec(), mean_abs_phi, attributions })
}

/// Pressures `{p_min, p_ref, p_max}` crossed with forecast levels
/// `{0, 0.5, 1}` of the forecast ceiling; levels are held fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseGrid {
    /// bar
    pub pressures: Vec<f64>,
    /// Normalized forecast values.
    pub forecasts: Vec<f64>,
    pub levels: Vec<f64>,
}

impl CaseGrid {
    pub fn standard(system: &SystemConfig, level: f64) -> Self {
        Self {
            pressures: vec![system.p_min, system.p_ref, system.p_max],
            forecasts: vec![0.0, 0.5, 1.0],
            levels: vec![level; system.compressors.len()],
        }
    }

    pub fn validate(&self, layout: &ObservationLayout) -> Result<()> {
        if self.pressures.is_empty() || self.forecasts.is_empty() {
            return Err(Error::Config("case grid needs at least one pressure and one forecast".into()));
        }
        if self.pressures.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::Config("case grid pressures must be finite and > 0".into()));
        }
        if self.levels.len() != layout.n_compressors {
            return Err(Error::Shape {
                what: "case grid levels".into(),
                expected: layout.n_compressors,
                actual: self.levels.len(),
            });
        }
        Ok(())
    }

    /// States in pressure-major order.
    pub fn states(&self, layout: &ObservationLayout) -> Array2<f64> {
        let n = self.pressures.len() * self.forecasts.len();
        Array2::from_shape_fn((n, layout.width()), |(r, j)| {
            let p = self.pressures[r / self.forecasts.len()];
            let f = self.forecasts[r % self.forecasts.len()];
            if j == 0 {
                layout.normalize_pressure(p)
            } else if j <= layout.horizon {
                f
            } else {
                self.levels[j - 1 - layout.horizon]
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterfallStep {
    pub feature: String,
    pub contribution: f64,
    /// Running total after adding this contribution, starting from the baseline.
    pub cumulative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseAttribution {
    /// bar
    pub pressure: f64,
    pub forecast: f64,
    pub result: AttributionResult,
    /// Contributions ordered by descending magnitude, from the baseline to the output.
    pub waterfall: Vec<WaterfallStep>,
}

fn waterfall(result: &AttributionResult, features: &[String]) -> Vec<WaterfallStep> {
    let mut order: Vec<usize> = (0..result.phi.len()).collect();
    order.sort_by(|&a, &b| result.phi[b].abs().total_cmp(&result.phi[a].abs()));
    let mut cumulative = result.baseline;
    order
        .into_iter()
        .map(|j| {
            cumulative += result.phi[j];
            WaterfallStep { feature: features[j].clone(), contribution: result.phi[j], cumulative }
        })
        .collect()
}

/// Case labels collapse all forecast entries into `F` since the grid fills
/// them with one value; the attribution keeps one entry per feature.
pub fn case_attribution(
    model: &dyn DeterministicPolicy,
    grid: &CaseGrid,
    layout: &ObservationLayout,
    background: ArrayView2<f64>,
) -> Result<Vec<CaseAttribution>> {
    grid.validate(layout)?;
    let states = grid.states(layout);
    let results = attribute_all(model, states.view(), background)?;
    let features = layout.labels();
    Ok(results
        .into_iter()
        .enumerate()
        .map(|(r, result)| CaseAttribution {
            pressure: grid.pressures[r / grid.forecasts.len()],
            forecast: grid.forecasts[r % grid.forecasts.len()],
            waterfall: waterfall(&result, &features),
            result,
        })
        .collect())
}

/// Synthetic excitations for time-resolved attribution. The plant is
/// bypassed: each step's state is written directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScenario {
    /// Pressure held at `p_ref`; normalized demand ramps from 0 to 1 over the
    /// first half and then holds.
    DemandSweepConstP,
    /// Normalized demand held at 0.5; pressure follows two sine periods
    /// spanning `[p_min, p_max]`.
    PressureSweepConstD,
}

impl std::str::FromStr for TimeScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "demand-sweep-const-p" | "demand" => Ok(Self::DemandSweepConstP),
            "pressure-sweep-const-d" | "pressure" => Ok(Self::PressureSweepConstD),
            _ => Err(Error::Config(format!("unknown time scenario '{s}' (use demand or pressure)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeStep {
    pub t: usize,
    /// Demand (normalized) or pressure (bar), depending on the scenario.
    pub excitation: f64,
    pub result: AttributionResult,
}

fn demand_ramp(t: usize, length: usize) -> f64 {
    let ramp = (length / 2).max(1);
    (t as f64 / ramp as f64).min(1.0)
}

fn excitation(scenario: TimeScenario, t: usize, length: usize, system: &SystemConfig) -> f64 {
    match scenario {
        TimeScenario::DemandSweepConstP => demand_ramp(t, length),
        TimeScenario::PressureSweepConstD => {
            let centre = 0.5 * (system.p_min + system.p_max);
            let amplitude = 0.5 * (system.p_max - system.p_min);
            let phase = 2.0 * std::f64::consts::PI * 2.0 * t as f64 / length as f64;
            centre + amplitude * phase.sin()
        }
    }
}

/// State at each step: forecast entry `i` is the excitation `i` steps ahead
/// for the demand sweep, so the forecast leads the ramp.
pub fn time_resolved_states(
    scenario: TimeScenario,
    length: usize,
    layout: &ObservationLayout,
    system: &SystemConfig,
    level: f64,
) -> (Array1<f64>, Array2<f64>) {
    let exc = Array1::from_shape_fn(length, |t| excitation(scenario, t, length, system));
    let states = Array2::from_shape_fn((length, layout.width()), |(t, j)| match scenario {
        TimeScenario::DemandSweepConstP if j == 0 => layout.normalize_pressure(system.p_ref),
        TimeScenario::DemandSweepConstP if j <= layout.horizon => demand_ramp(t + j - 1, length),
        TimeScenario::PressureSweepConstD if j == 0 => layout.normalize_pressure(exc[t]),
        TimeScenario::PressureSweepConstD if j <= layout.horizon => 0.5,
        _ => level,
    });
    (exc, states)
}

pub fn time_resolved_attribution(
    model: &dyn DeterministicPolicy,
    scenario: TimeScenario,
    length: usize,
    layout: &ObservationLayout,
    system: &SystemConfig,
    level: f64,
    background: ArrayView2<f64>,
) -> Result<Vec<TimeStep>> {
    if length == 0 {
        return Err(Error::Config("time-resolved length must be > 0".into()));
    }
    let (exc, states) = time_resolved_states(scenario, length, layout, system, level);
    let results = attribute_all(model, states.view(), background)?;
    Ok(results
        .into_iter()
        .enumerate()
        .map(|(t, result)| TimeStep { t, excitation: exc[t], result })
        .collect())
}

/// First `n` rows of `background` (rows are i.i.d., so a prefix is a uniform
/// subsample).
pub fn subsample(background: ArrayView2<f64>, n: Option<usize>) -> ArrayView2<f64> {
    match n {
        Some(n) if n < background.nrows() => background.slice_move(ndarray::s![..n, ..]),
        _ => background,
    }
}

/// Column means, used by closed-form checks.
pub fn feature_means(states: ArrayView2<f64>) -> Array1<f64> {
    states.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(states.ncols()))
}
