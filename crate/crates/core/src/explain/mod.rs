//! Explainability for deterministic policies.
//!
//! Three levels, all model-agnostic through [`DeterministicPolicy`]:
//!
//! 1. [`perturbation_sweep`]: setpoints over a forecast grid at fixed pressures.
//! 2. [`saliency_profile`]: mean absolute input gradient per feature.
//! 3. Shapley attribution of the summed setpoint ([`shap_exact`],
//!    [`shap_sampled`]) and the analyses built on it: global ranking, per-state
//!    patterns, a case grid and time-resolved excitation scenarios.
//!
//! Coalition values are interventional: features outside the coalition are
//! replaced by background samples and the output is averaged.

mod analyses;
mod output;
mod saliency;
mod shap;
mod sweep;

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::ObservationLayout;
use crate::error::{Error, Result};
pub use crate::policy::DeterministicPolicy;

pub use analyses::{
    case_attribution, feature_means, global_attribution, subsample, time_resolved_attribution, time_resolved_states,
    CaseAttribution, CaseGrid, GlobalAttribution, TimeScenario, TimeStep, WaterfallStep,
};
pub use output::{
    write_attributions_json, write_case_json, write_global_csv, write_pattern_csv, write_saliency_csv,
    write_sweep_csv, write_time_csv,
};
pub use saliency::{saliency_profile, SensitivityProfile};
pub use shap::{shap_exact, shap_sampled, AttributionResult, ShapMethod, MAX_EXACT_FEATURES, MIN_PERMUTATIONS};
pub use sweep::{perturbation_sweep, SweepRow, SweepSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainConfig {
    pub n_background: usize,
    pub n_test: usize,
    pub n_saliency_states: usize,
    /// Background rows actually averaged per coalition in exact mode; `None`
    /// uses the whole background.
    pub background_subsample: Option<usize>,
    pub n_permutations: usize,
    pub seed: u64,
    /// Sampling range of the normalized pressure feature.
    pub pressure_norm_range: [f64; 2],
    /// Points in the perturbation-sweep flow grid.
    pub sweep_points: usize,
    /// Steps of each time-resolved scenario.
    pub time_steps: usize,
    /// Compressor level used wherever levels are held fixed.
    pub level_template: f64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            n_background: 1024,
            n_test: 120,
            n_saliency_states: 800,
            background_subsample: None,
            n_permutations: 2000,
            seed: 0,
            pressure_norm_range: [-0.3, 0.3],
            sweep_points: 61,
            time_steps: 120,
            level_template: 0.5,
        }
    }
}

impl ExplainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_background", self.n_background),
            ("n_test", self.n_test),
            ("n_saliency_states", self.n_saliency_states),
            ("sweep_points", self.sweep_points),
            ("time_steps", self.time_steps),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be > 0")));
            }
        }
        if self.background_subsample == Some(0) {
            return Err(Error::Config("background_subsample must be > 0".into()));
        }
        if self.n_permutations < MIN_PERMUTATIONS {
            return Err(Error::Config(format!("n_permutations must be >= {MIN_PERMUTATIONS}")));
        }
        let [lo, hi] = self.pressure_norm_range;
        if !(lo < hi) {
            return Err(Error::Config(format!("invalid pressure_norm_range [{lo}, {hi}]")));
        }
        if !(0.0..=1.0).contains(&self.level_template) {
            return Err(Error::Config("level_template must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Uniform sampler over valid observations: normalized pressure in a
/// configured range, forecasts and levels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSampler {
    pub layout: ObservationLayout,
    pub pressure_norm_range: [f64; 2],
}

impl StateSampler {
    pub fn new(layout: ObservationLayout, pressure_norm_range: [f64; 2]) -> Self {
        Self { layout, pressure_norm_range }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Array2<f64> {
        let [lo, hi] = self.pressure_norm_range;
        Array2::from_shape_fn((n, self.layout.width()), |(_, j)| {
            if j == 0 {
                rng.random_range(lo..hi)
            } else {
                rng.random::<f64>()
            }
        })
    }

    /// Background and test sets drawn from independent streams of one seed.
    pub fn background_and_test(&self, config: &ExplainConfig) -> (Array2<f64>, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let background = self.sample(&mut rng, config.n_background);
        let test = self.sample(&mut rng, config.n_test);
        (background, test)
    }
}

/// Scales a vector so its largest absolute entry is 1 (all-zero input is
/// returned unchanged).
pub fn normalize_unit_max(values: &[f64]) -> Vec<f64> {
    let max = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        values.to_vec()
    } else {
        values.iter().map(|v| v / max).collect()
    }
}

/// Indices sorted by descending value; ties keep feature order.
pub fn ranking(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx
}

/// `actions = x W + b` with identity activations. Its gradient and Shapley
/// values have closed forms, which makes it a reference model.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPolicy {
    /// `obs_dim x act_dim`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearPolicy {
    /// Single-output model `sum_j w_j x_j`.
    pub fn single(weights: &[f64]) -> Self {
        Self {
            weights: Array2::from_shape_vec((weights.len(), 1), weights.to_vec()).expect("column"),
            bias: Array1::zeros(1),
        }
    }
}

impl DeterministicPolicy for LinearPolicy {
    fn obs_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn act_dim(&self) -> usize {
        self.weights.ncols()
    }

    fn actions(&self, states: ArrayView2<f64>) -> Array2<f64> {
        states.dot(&self.weights) + &self.bias
    }

    fn summed_action_gradients(&self, states: ArrayView2<f64>) -> Array2<f64> {
        let row = self.weights.sum_axis(ndarray::Axis(1));
        Array2::from_shape_fn((states.nrows(), self.obs_dim()), |(_, j)| row[j])
    }
}

/// Ignores its input.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantPolicy {
    pub obs_dim: usize,
    pub value: Vec<f64>,
}

impl DeterministicPolicy for ConstantPolicy {
    fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    fn act_dim(&self) -> usize {
        self.value.len()
    }

    fn actions(&self, states: ArrayView2<f64>) -> Array2<f64> {
        Array2::from_shape_fn((states.nrows(), self.value.len()), |(_, k)| self.value[k])
    }

    fn summed_action_gradients(&self, states: ArrayView2<f64>) -> Array2<f64> {
        Array2::zeros((states.nrows(), self.obs_dim))
    }
}

pub(crate) fn check_width(model: &dyn DeterministicPolicy, width: usize, what: &str) -> Result<()> {
    if model.obs_dim() != width {
        return Err(Error::Shape { what: what.into(), expected: model.obs_dim(), actual: width });
    }
    Ok(())
}
