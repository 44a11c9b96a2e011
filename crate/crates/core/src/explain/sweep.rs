use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{check_width, DeterministicPolicy};
use crate::env::ObservationLayout;
use crate::error::{Error, Result};
use crate::plant::SystemConfig;

/// Probe grid for the perturbation sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// bar
    pub fixed_pressures: Vec<f64>,
    /// Consumer demand values, m³/s, ascending.
    pub flow_grid: Vec<f64>,
    /// Compressor levels held fixed.
    pub levels_template: Vec<f64>,
}

impl SweepSpec {
    /// Pressures 7.9 to 8.3 bar and `points` flows spanning `[0, 3 * max_i max_flow_i]`.
    pub fn standard(system: &SystemConfig, points: usize, level: f64) -> Result<Self> {
        if points < 2 {
            return Err(Error::Config("a sweep needs at least two flow points".into()));
        }
        let top = 3.0 * system.largest_unit_flow();
        let flow_grid = (0..points).map(|i| top * i as f64 / (points - 1) as f64).collect();
        Ok(Self {
            fixed_pressures: vec![7.9, 8.0, 8.1, 8.2, 8.3],
            flow_grid,
            levels_template: vec![level; system.compressors.len()],
        })
    }

    pub fn validate(&self, layout: &ObservationLayout) -> Result<()> {
        if self.flow_grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("sweep flow grid must be ascending".into()));
        }
        if self.levels_template.len() != layout.n_compressors {
            return Err(Error::Shape {
                what: "sweep levels template".into(),
                expected: layout.n_compressors,
                actual: self.levels_template.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub pressure: f64,
    pub flow: f64,
    /// Normalized forecast value written into every forecast entry (may exceed 1).
    pub forecast: f64,
    pub setpoints: Vec<f64>,
}

/// Evaluates the policy on every (pressure, flow) pair, ordered by pressure
/// then flow. The whole forecast vector is filled with the probed flow.
pub fn perturbation_sweep(
    model: &dyn DeterministicPolicy,
    spec: &SweepSpec,
    layout: &ObservationLayout,
) -> Result<Vec<SweepRow>> {
    spec.validate(layout)?;
    check_width(model, layout.width(), "sweep state")?;
    let pairs: Vec<(f64, f64)> = spec
        .fixed_pressures
        .iter()
        .flat_map(|&p| spec.flow_grid.iter().map(move |&f| (p, f)))
        .collect();
    let states = Array2::from_shape_fn((pairs.len(), layout.width()), |(r, j)| {
        let (p, f) = pairs[r];
        if j == 0 {
            layout.normalize_pressure(p)
        } else if j <= layout.horizon {
            f / layout.demand_ceiling
        } else {
            spec.levels_template[j - 1 - layout.horizon]
        }
    });
    let actions = model.actions(states.view());
    Ok(pairs
        .iter()
        .enumerate()
        .map(|(r, &(pressure, flow))| SweepRow {
            pressure,
            flow,
            forecast: flow / layout.demand_ceiling,
            setpoints: actions.row(r).to_vec(),
        })
        .collect())
}
