use std::collections::HashMap;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_width, DeterministicPolicy};
use crate::error::{Error, Result};

/// Largest feature count handled by full subset enumeration.
pub const MAX_EXACT_FEATURES: usize = 12;

/// Smallest accepted permutation count for the sampled estimator.
pub const MIN_PERMUTATIONS: usize = 50;

/// Rows evaluated per model call when filling coalition values.
const ROW_BLOCK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapMethod {
    Exact { background: usize },
    PermutationSampled { permutations: usize, background: usize, seed: u64 },
}

/// Shapley attribution of the summed setpoint at one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub state: Vec<f64>,
    /// Attribution of the summed action, one entry per feature.
    pub phi: Vec<f64>,
    /// `phi_per_action[j][k]`: attribution of action `k` to feature `j`.
    pub phi_per_action: Vec<Vec<f64>>,
    /// Expected summed action over the background.
    pub baseline: f64,
    /// Summed action at `state`.
    pub output: f64,
    pub method: ShapMethod,
    /// Standard error per feature (sampled estimator only).
    pub stderr: Option<Vec<f64>>,
}

impl AttributionResult {
    /// `sum(phi) - (output - baseline)`.
    pub fn efficiency_gap(&self) -> f64 {
        self.phi.iter().sum::<f64>() - (self.output - self.baseline)
    }
}

/// Interventional coalition values `v(S)` per action: the mean model output
/// over the background with the features in `S` taken from `state`.
fn coalition_values(
    model: &dyn DeterministicPolicy,
    state: ArrayView1<f64>,
    background: ArrayView2<f64>,
    masks: &[u64],
) -> Vec<Vec<f64>> {
    let (b, f) = background.dim();
    let k = model.act_dim();
    let per_block = (ROW_BLOCK / b).max(1);
    masks
        .par_chunks(per_block)
        .flat_map_iter(|group| {
            let rows = Array2::from_shape_fn((group.len() * b, f), |(r, j)| {
                if group[r / b] >> j & 1 == 1 {
                    state[j]
                } else {
                    background[[r % b, j]]
                }
            });
            let out = model.actions(rows.view());
            (0..group.len())
                .map(|g| {
                    (0..k)
                        .map(|a| (0..b).map(|r| out[[g * b + r, a]]).sum::<f64>() / b as f64)
                        .collect::<Vec<f64>>()
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

fn summed_output(model: &dyn DeterministicPolicy, state: ArrayView1<f64>) -> f64 {
    let row = state.to_owned().insert_axis(ndarray::Axis(0));
    model.actions(row.view()).sum()
}

fn check_inputs(model: &dyn DeterministicPolicy, state: ArrayView1<f64>, background: ArrayView2<f64>) -> Result<()> {
    check_width(model, state.len(), "attribution state")?;
    check_width(model, background.ncols(), "background")?;
    if background.nrows() == 0 {
        return Err(Error::Config("background set is empty".into()));
    }
    Ok(())
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

fn totals(phi_per_action: &[Vec<f64>]) -> Vec<f64> {
    phi_per_action.iter().map(|row| row.iter().sum()).collect()
}

/// Exact Shapley values by enumerating all `2^F` coalitions.
///
/// Weights `|S|! (F-|S|-1)! / F!` are formed from integer factorials, which
/// are exact for `F <= 12`.
pub fn shap_exact(
    model: &dyn DeterministicPolicy,
    state: ArrayView1<f64>,
    background: ArrayView2<f64>,
) -> Result<AttributionResult> {
    check_inputs(model, state, background)?;
    let f = state.len();
    if f > MAX_EXACT_FEATURES {
        return Err(Error::Config(format!(
            "{f} features exceed the exact enumeration limit of {MAX_EXACT_FEATURES}; use the sampled estimator"
        )));
    }
    let masks: Vec<u64> = (0..1u64 << f).collect();
    let v = coalition_values(model, state, background, &masks);
    let total = factorial(f) as f64;
    let weights: Vec<f64> = (0..f).map(|s| (factorial(s) * factorial(f - s - 1)) as f64 / total).collect();
    let k = model.act_dim();
    let mut phi_per_action = vec![vec![0.0; k]; f];
    for (j, phi_j) in phi_per_action.iter_mut().enumerate() {
        let bit = 1u64 << j;
        for s in masks.iter().filter(|s| *s & bit == 0) {
            let w = weights[s.count_ones() as usize];
            for a in 0..k {
                phi_j[a] += w * (v[(s | bit) as usize][a] - v[*s as usize][a]);
            }
        }
    }
    Ok(AttributionResult {
        state: state.to_vec(),
        phi: totals(&phi_per_action),
        phi_per_action,
        baseline: v[0].iter().sum(),
        output: summed_output(model, state),
        method: ShapMethod::Exact { background: background.nrows() },
        stderr: None,
    })
}

/// Permutation-sampling estimate of the same interventional Shapley values.
///
/// Each permutation contributes one marginal contribution per feature; the
/// estimate is their mean and the standard error is the sample standard
/// deviation over `sqrt(n_permutations)`. Coalition values are memoized.
pub fn shap_sampled(
    model: &dyn DeterministicPolicy,
    state: ArrayView1<f64>,
    background: ArrayView2<f64>,
    n_permutations: usize,
    seed: u64,
) -> Result<AttributionResult> {
    check_inputs(model, state, background)?;
    if n_permutations < MIN_PERMUTATIONS {
        return Err(Error::Config(format!("n_permutations must be >= {MIN_PERMUTATIONS}, got {n_permutations}")));
    }
    let f = state.len();
    if f > 64 {
        return Err(Error::Config(format!("{f} features exceed the 64-feature coalition encoding")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..f).collect();
    let perms: Vec<Vec<usize>> = (0..n_permutations)
        .map(|_| {
            order.shuffle(&mut rng);
            order.clone()
        })
        .collect();

    let mut needed: Vec<u64> = perms
        .iter()
        .flat_map(|p| {
            p.iter().scan(0u64, |mask, &j| {
                *mask |= 1 << j;
                Some(*mask)
            })
        })
        .chain(std::iter::once(0))
        .collect();
    needed.sort_unstable();
    needed.dedup();
    let values = coalition_values(model, state, background, &needed);
    let memo: HashMap<u64, Vec<f64>> = needed.into_iter().zip(values).collect();

    let k = model.act_dim();
    let mut sum = vec![vec![0.0; k]; f];
    let mut sum_total = vec![0.0; f];
    let mut sum_sq_total = vec![0.0; f];
    for p in &perms {
        let mut mask = 0u64;
        for &j in p {
            let before = &memo[&mask];
            mask |= 1 << j;
            let after = &memo[&mask];
            let mut delta_total = 0.0;
            for a in 0..k {
                let d = after[a] - before[a];
                sum[j][a] += d;
                delta_total += d;
            }
            sum_total[j] += delta_total;
            sum_sq_total[j] += delta_total * delta_total;
        }
    }
    let n = n_permutations as f64;
    let phi_per_action: Vec<Vec<f64>> = sum.iter().map(|row| row.iter().map(|s| s / n).collect()).collect();
    let stderr = (0..f)
        .map(|j| {
            let mean = sum_total[j] / n;
            let var = ((sum_sq_total[j] - n * mean * mean) / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        })
        .collect();
    Ok(AttributionResult {
        state: state.to_vec(),
        phi: totals(&phi_per_action),
        phi_per_action,
        baseline: memo[&0].iter().sum(),
        output: summed_output(model, state),
        method: ShapMethod::PermutationSampled { permutations: n_permutations, background: background.nrows(), seed },
        stderr: Some(stderr),
    })
}
