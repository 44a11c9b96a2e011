//! Clipped-surrogate loss and its gradient.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;

use super::adam::Adam;
use super::rollout::{gaussian_log_prob, RolloutBatch};
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::policy::PolicyParams;

/// `min(r A, clip(r, 1 - eps, 1 + eps) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

/// `KL(old || new)` for one dimension of a diagonal Gaussian.
pub fn gaussian_kl(mu_old: f64, log_std_old: f64, mu_new: f64, log_std_new: f64) -> f64 {
    let var_old = (2.0 * log_std_old).exp();
    let var_new = (2.0 * log_std_new).exp();
    log_std_new - log_std_old + (var_old + (mu_old - mu_new).powi(2)) / (2.0 * var_new) - 0.5
}

/// Averages of one pass over a batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateMetrics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub kl: f64,
    pub clip_fraction: f64,
    pub entropy: f64,
}

impl UpdateMetrics {
    fn accumulate(&mut self, other: &UpdateMetrics, weight: f64) {
        self.policy_loss += weight * other.policy_loss;
        self.value_loss += weight * other.value_loss;
        self.kl += weight * other.kl;
        self.clip_fraction += weight * other.clip_fraction;
        self.entropy += weight * other.entropy;
    }
}

/// Loss, metrics and gradient for a set of chunks.
pub fn loss_and_gradient(
    params: &PolicyParams,
    batch: &RolloutBatch,
    chunk_ids: &[usize],
    config: &TrainConfig,
) -> Result<(f64, UpdateMetrics, PolicyParams)> {
    let act = params.act_dim();
    let obs_dim = params.obs_dim();
    let hidden = params.hidden();
    let b = chunk_ids.len();
    let t_max = chunk_ids.iter().map(|&i| batch.chunks[i].len()).max().unwrap_or(0);
    let n: usize = chunk_ids.iter().map(|&i| batch.chunks[i].len()).sum();
    if n == 0 {
        return Err(Error::Usage("empty minibatch".into()));
    }
    let inv_n = 1.0 / n as f64;

    let xs: Vec<Array2<f64>> = (0..t_max)
        .map(|t| {
            Array2::from_shape_fn((b, obs_dim), |(r, j)| {
                batch.chunks[chunk_ids[r]].obs.get(t).map_or(0.0, |o| o[j])
            })
        })
        .collect();
    let resets: Vec<Vec<bool>> = (0..t_max)
        .map(|t| {
            chunk_ids
                .iter()
                .map(|&i| batch.chunks[i].episode_start.get(t).copied().unwrap_or(false))
                .collect()
        })
        .collect();
    let h0 = Array2::from_shape_fn((b, hidden), |(r, j)| batch.chunks[chunk_ids[r]].h0[j]);
    let c0 = Array2::from_shape_fn((b, hidden), |(r, j)| batch.chunks[chunk_ids[r]].c0[j]);
    let (out, cache) = params.forward_sequence(&xs, Some(&resets), h0, c0);

    let log_std: Vec<f64> = params.log_std.to_vec();
    let var: Vec<f64> = log_std.iter().map(|l| (2.0 * l).exp()).collect();
    let log_std_old = &batch.log_std_old;
    let var_old: Vec<f64> = log_std_old.iter().map(|l| (2.0 * l).exp()).collect();

    let mut d_mu = vec![Array2::<f64>::zeros((b, act)); t_max];
    let mut d_value = vec![Array1::<f64>::zeros(b); t_max];
    let mut d_log_std = vec![0.0; act];
    let mut m = UpdateMetrics::default();
    let mut clipped = 0usize;

    for t in 0..t_max {
        for (r, &ci) in chunk_ids.iter().enumerate() {
            let chunk = &batch.chunks[ci];
            if t >= chunk.len() {
                continue;
            }
            let mu: Vec<f64> = out.mu[t].row(r).to_vec();
            let u = &chunk.u[t];
            let adv = chunk.advantage[t];
            let log_prob = gaussian_log_prob(u, &mu, &log_std);
            let ratio = (log_prob - chunk.log_prob[t]).exp();
            let surrogate = clipped_surrogate(ratio, adv, config.clip);
            m.policy_loss -= surrogate;
            if (ratio - 1.0).abs() > config.clip {
                clipped += 1;
            }
            // d(-surrogate)/d(log_prob): nonzero only while the unclipped term is the minimum.
            let d_logp = if ratio * adv <= ratio.clamp(1.0 - config.clip, 1.0 + config.clip) * adv {
                -ratio * adv * inv_n
            } else {
                0.0
            };
            for k in 0..act {
                let z = (u[k] - mu[k]) / var[k].sqrt();
                let dmu_old = mu[k] - chunk.mu_old[t][k];
                m.kl += gaussian_kl(chunk.mu_old[t][k], log_std_old[k], mu[k], log_std[k]);
                d_mu[t][[r, k]] = d_logp * (u[k] - mu[k]) / var[k] + config.kl_coeff * inv_n * dmu_old / var[k];
                d_log_std[k] += d_logp * (z * z - 1.0)
                    + config.kl_coeff * inv_n * (1.0 - (var_old[k] + dmu_old * dmu_old) / var[k]);
            }
            let v = out.value[t][r];
            let err = v - chunk.returns[t];
            m.value_loss += 0.5 * err * err;
            d_value[t][r] = config.vf_coeff * err * inv_n;
        }
    }
    m.policy_loss *= inv_n;
    m.value_loss *= inv_n;
    m.kl *= inv_n;
    m.clip_fraction = clipped as f64 * inv_n;
    m.entropy = log_std.iter().map(|l| l + 0.5 * (1.0 + (2.0 * std::f64::consts::PI).ln())).sum();
    let loss = m.policy_loss + config.kl_coeff * m.kl + config.vf_coeff * m.value_loss - config.entropy_coeff * m.entropy;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("non-finite loss {loss}")));
    }

    let (mut grads, _) = params.backward_sequence(&cache, &d_mu, &d_value);
    for k in 0..act {
        grads.log_std[k] = d_log_std[k] - config.entropy_coeff;
    }
    Ok((loss, m, grads))
}

fn clip_gradient(grads: &mut PolicyParams, max_norm: f64) {
    let norm = grads.squared_norm().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for s in grads.slices_mut() {
            s.iter_mut().for_each(|g| *g *= scale);
        }
    }
}

/// Lower and upper bounds applied to `log_std` after every step.
pub const LOG_STD_BOUNDS: (f64, f64) = (-5.0, 2.0);

/// One epoch of shuffled minibatch steps over `batch`.
///
/// On a non-finite loss or gradient the parameters are restored to their
/// state on entry and a numerical error is returned.
pub fn ppo_update<R: Rng + ?Sized>(
    params: &mut PolicyParams,
    optimizer: &mut Adam,
    batch: &RolloutBatch,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<UpdateMetrics> {
    if batch.chunks.is_empty() {
        return Err(Error::Usage("cannot update on an empty batch".into()));
    }
    let snapshot = params.clone();
    let optimizer_snapshot = optimizer.clone();
    let mut order: Vec<usize> = (0..batch.chunks.len()).collect();
    order.shuffle(rng);
    let per_minibatch = (config.minibatch_size / batch.seq_len.max(1)).max(1);
    let mut totals = UpdateMetrics::default();
    let total_steps = batch.num_steps() as f64;

    for ids in order.chunks(per_minibatch) {
        let result = loss_and_gradient(params, batch, ids, config).and_then(|(loss, m, mut grads)| {
            if let Some(max_norm) = config.grad_clip {
                clip_gradient(&mut grads, max_norm);
            }
            if grads.is_finite() {
                Ok((loss, m, grads))
            } else {
                Err(Error::Numerical("non-finite gradient".into()))
            }
        });
        let (_, m, grads) = match result {
            Ok(v) => v,
            Err(e) => {
                *params = snapshot;
                *optimizer = optimizer_snapshot;
                return Err(e);
            }
        };
        optimizer.step(params, &grads);
        for v in params.log_std.iter_mut() {
            *v = v.clamp(LOG_STD_BOUNDS.0, LOG_STD_BOUNDS.1);
        }
        let steps: usize = ids.iter().map(|&i| batch.chunks[i].len()).sum();
        totals.accumulate(&m, steps as f64 / total_steps);
    }
    if !params.is_finite() {
        *params = snapshot;
        *optimizer = optimizer_snapshot;
        return Err(Error::Numerical("parameters became non-finite".into()));
    }
    Ok(totals)
}
