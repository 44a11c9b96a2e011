use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{check_width, DeterministicPolicy};
use crate::error::{Error, Result};

/// Mean absolute gradient of the summed setpoints per input feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityProfile {
    pub features: Vec<String>,
    pub mean_abs_gradient: Vec<f64>,
    /// States that contributed to the mean.
    pub samples: usize,
    /// States dropped because their gradient was not finite.
    pub discarded: usize,
}

/// Largest tolerated share of discarded states.
const MAX_DISCARD_FRACTION: f64 = 0.01;

pub fn saliency_profile(
    model: &dyn DeterministicPolicy,
    states: ArrayView2<f64>,
    features: &[String],
) -> Result<SensitivityProfile> {
    check_width(model, states.ncols(), "saliency state")?;
    if features.len() != states.ncols() {
        return Err(Error::Shape { what: "feature labels".into(), expected: states.ncols(), actual: features.len() });
    }
    let grads = model.summed_action_gradients(states);
    let mut sums = vec![0.0; states.ncols()];
    let mut used = 0usize;
    let mut discarded = 0usize;
    for row in grads.rows() {
        if row.iter().all(|g| g.is_finite()) {
            used += 1;
            sums.iter_mut().zip(row).for_each(|(s, g)| *s += g.abs());
        } else {
            discarded += 1;
        }
    }
    let total = states.nrows();
    if total == 0 || discarded as f64 > MAX_DISCARD_FRACTION * total as f64 {
        return Err(Error::Numerical(format!("{discarded} of {total} saliency samples had non-finite gradients")));
    }
    Ok(SensitivityProfile {
        features: features.to_vec(),
        mean_abs_gradient: sums.iter().map(|s| s / used as f64).collect(),
        samples: used,
        discarded,
    })
}
