//! Proximal policy optimization for the recurrent actor-critic.
//!
//! Each iteration collects `steps_per_iteration` transitions from
//! `rollout_workers` environments, computes GAE advantages, and runs
//! `epochs_per_iteration` passes of minibatch Adam steps on
//!
//! ```text
//! -min(r A, clip(r) A) + kl_coeff * KL(old || new) + vf_coeff * 0.5 (V - R)^2 - entropy_coeff * H
//! ```
//!
//! Recurrence is handled by truncated backpropagation over fixed-length
//! chunks that start from stored recurrent states.

mod adam;
mod gae;
mod rollout;
mod update;

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{save_params, PolicyParams, HIDDEN};
use crate::scenario::Scenario;

pub use adam::Adam;
pub use gae::compute_gae;
pub use rollout::{gaussian_log_prob, Chunk, ReturnScaler, RolloutBatch, RolloutCollector, RolloutStats};
pub use update::{clipped_surrogate, gaussian_kl, loss_and_gradient, ppo_update, UpdateMetrics, LOG_STD_BOUNDS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub kl_coeff: f64,
    pub entropy_coeff: f64,
    pub vf_coeff: f64,
    /// Global gradient-norm limit; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub rollout_workers: usize,
    pub steps_per_iteration: usize,
    pub minibatch_size: usize,
    pub epochs_per_iteration: usize,
    pub max_iterations: usize,
    /// Iterations over which the moving average must improve; `None` disables early stopping.
    pub early_stop_patience: Option<usize>,
    /// Width of the moving average used for early stopping.
    pub early_stop_window: usize,
    /// Minimum relative improvement of the moving average over the patience window.
    pub early_stop_min_improvement: f64,
    /// Divide rewards by the running standard deviation of discounted returns.
    pub scale_rewards: bool,
    /// Truncated backpropagation length.
    pub seq_len: usize,
    pub hidden: usize,
    /// Iterations whose parameters are kept as checkpoints (the final one always is).
    pub checkpoint_iterations: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            gamma: 0.995,
            gae_lambda: 0.97,
            clip: 0.3,
            kl_coeff: 0.2,
            entropy_coeff: 0.0,
            vf_coeff: 1.0,
            grad_clip: None,
            rollout_workers: 4,
            steps_per_iteration: 8192,
            minibatch_size: 512,
            epochs_per_iteration: 10,
            max_iterations: 200,
            early_stop_patience: Some(20),
            early_stop_window: 20,
            early_stop_min_improvement: 0.005,
            scale_rewards: true,
            seq_len: 32,
            hidden: HIDDEN,
            checkpoint_iterations: vec![5],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail(format!("gamma must be in (0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return fail(format!("gae_lambda must be in [0, 1], got {}", self.gae_lambda));
        }
        if !(self.clip > 0.0) {
            return fail(format!("clip must be > 0, got {}", self.clip));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        for (name, v) in [("kl_coeff", self.kl_coeff), ("entropy_coeff", self.entropy_coeff), ("vf_coeff", self.vf_coeff)] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be >= 0, got {v}"));
            }
        }
        if let Some(g) = self.grad_clip {
            if !(g > 0.0) {
                return fail(format!("grad_clip must be > 0, got {g}"));
            }
        }
        if self.rollout_workers == 0 || self.seq_len == 0 || self.hidden == 0 || self.minibatch_size == 0 {
            return fail("rollout_workers, seq_len, hidden and minibatch_size must be > 0".into());
        }
        if self.epochs_per_iteration == 0 {
            return fail("epochs_per_iteration must be > 0".into());
        }
        if self.steps_per_iteration < self.rollout_workers {
            return fail(format!(
                "steps_per_iteration ({}) must be at least rollout_workers ({})",
                self.steps_per_iteration, self.rollout_workers
            ));
        }
        if self.early_stop_window == 0 {
            return fail("early_stop_window must be > 0".into());
        }
        Ok(())
    }

    pub fn steps_per_worker(&self) -> usize {
        self.steps_per_iteration / self.rollout_workers
    }
}

/// One row of the learning curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub kl: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub iteration: usize,
    pub params: PolicyParams,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    /// Parameters of the iteration with the highest mean episode reward.
    pub best_params: PolicyParams,
    pub best_iteration: usize,
    /// Highest mean reward seen up to and including each iteration.
    pub best_so_far: Vec<f64>,
    pub curve: Vec<CurvePoint>,
    pub checkpoints: Vec<Checkpoint>,
    pub stopped_early: bool,
    pub numerical_failures: usize,
}

pub const CURVE_FILE: &str = "learning_curve.csv";
pub const FINAL_FILE: &str = "policy_final.bin";
pub const BEST_FILE: &str = "policy_best.bin";

pub fn checkpoint_file(iteration: usize) -> String {
    format!("policy_iter{iteration:04}.bin")
}

pub fn write_curve(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in curve {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn moving_average(values: &[f64], end: usize, window: usize) -> f64 {
    let start = end.saturating_sub(window);
    let slice = &values[start..end];
    slice.iter().sum::<f64>() / slice.len() as f64
}

/// True when the moving average has stopped improving.
pub fn should_stop_early(rewards: &[f64], window: usize, patience: usize, min_improvement: f64) -> bool {
    let n = rewards.len();
    if n < window + patience {
        return false;
    }
    let now = moving_average(rewards, n, window);
    let before = moving_average(rewards, n - patience, window);
    now - before < min_improvement * before.abs()
}

/// Maximum consecutive iterations whose update may fail numerically.
const MAX_CONSECUTIVE_FAILURES: usize = 3;

/// Trains a fresh network. Deterministic for a given seed and worker count.
///
/// When `out_dir` is given the checkpoints, the final and best parameters and
/// the learning curve are written there.
pub fn train(scenario: &Scenario, config: &TrainConfig, seed: u64, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    scenario.validate()?;
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (shift, gain) = scenario.input_normalization();
    let mut params = PolicyParams::init(scenario.obs_dim(), scenario.act_dim(), config.hidden, &mut rng)
        .with_input_normalization(&shift, &gain)?;
    let mut optimizer = Adam::new(&params, config.learning_rate);
    let mut collector = RolloutCollector::new(scenario, config.rollout_workers, config.hidden, seed.wrapping_add(1), config.scale_rewards)?;
    let hash = scenario.hash();
    let save = |name: &str, p: &PolicyParams| -> Result<Option<PathBuf>> {
        match out_dir {
            Some(dir) => {
                let path = dir.join(name);
                save_params(&path, p, &scenario.name, &hash)?;
                Ok(Some(path))
            }
            None => Ok(None),
        }
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut curve = Vec::with_capacity(config.max_iterations);
    let mut rewards = Vec::with_capacity(config.max_iterations);
    let mut best_so_far = Vec::with_capacity(config.max_iterations);
    let mut best = (f64::NEG_INFINITY, params.clone(), 0usize);
    let mut checkpoints = Vec::new();
    let mut stopped_early = false;
    let mut failures = 0usize;
    let mut consecutive_failures = 0usize;
    let mut last_mean: Option<f64> = None;

    for iteration in 1..=config.max_iterations {
        let (batch, stats) =
            collector.collect(&params, config.steps_per_worker(), config.seq_len, config.gamma, config.gae_lambda)?;
        let mean_reward = if stats.completed_returns.is_empty() {
            last_mean.unwrap_or(stats.reward_sum / stats.steps as f64 * scenario.episode_len as f64)
        } else {
            stats.completed_returns.iter().sum::<f64>() / stats.completed_returns.len() as f64
        };
        last_mean = Some(mean_reward);
        // Score the parameters that produced this batch before updating them.
        if mean_reward > best.0 {
            best = (mean_reward, params.clone(), iteration - 1);
        }

        let mut metrics = UpdateMetrics::default();
        let mut failed = false;
        for _ in 0..config.epochs_per_iteration {
            match ppo_update(&mut params, &mut optimizer, &batch, config, &mut rng) {
                Ok(m) => metrics = m,
                Err(Error::Numerical(msg)) => {
                    log::warn!("iteration {iteration}: update aborted ({msg}); parameters restored");
                    failed = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if failed {
            failures += 1;
            consecutive_failures += 1;
            if consecutive_failures >= MAX_CONSECUTIVE_FAILURES {
                return Err(Error::Numerical(format!(
                    "{consecutive_failures} consecutive iterations failed numerically"
                )));
            }
        } else {
            consecutive_failures = 0;
        }
        if stats.diverged_episodes > 0 {
            log::info!("iteration {iteration}: {} episodes left the pressure band", stats.diverged_episodes);
        }

        let point = CurvePoint {
            iteration,
            mean_reward,
            policy_loss: metrics.policy_loss,
            value_loss: metrics.value_loss,
            kl: metrics.kl,
            clip_fraction: metrics.clip_fraction,
        };
        log::info!(
            "iter {iteration:4} reward {mean_reward:10.4} pl {:+.4} vl {:.4} kl {:.5} clip {:.3} log_std {:?}",
            point.policy_loss,
            point.value_loss,
            point.kl,
            point.clip_fraction,
            params.log_std.to_vec()
        );
        curve.push(point);
        rewards.push(mean_reward);
        best_so_far.push(best.0);

        if config.checkpoint_iterations.contains(&iteration) {
            let path = save(&checkpoint_file(iteration), &params)?;
            checkpoints.push(Checkpoint { iteration, params: params.clone(), path });
        }
        if let Some(patience) = config.early_stop_patience {
            if should_stop_early(&rewards, config.early_stop_window, patience, config.early_stop_min_improvement) {
                log::info!("early stop at iteration {iteration}");
                stopped_early = true;
                break;
            }
        }
    }

    let final_iteration = curve.len();
    if !checkpoints.iter().any(|c| c.iteration == final_iteration) {
        let path = save(FINAL_FILE, &params)?;
        checkpoints.push(Checkpoint { iteration: final_iteration, params: params.clone(), path });
    } else {
        save(FINAL_FILE, &params)?;
    }
    save(BEST_FILE, &best.1)?;
    if let Some(dir) = out_dir {
        write_curve(&dir.join(CURVE_FILE), &curve)?;
    }
    Ok(TrainOutcome {
        params,
        best_params: best.1,
        best_iteration: best.2,
        best_so_far,
        curve,
        checkpoints,
        stopped_early,
        numerical_failures: failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> TrainConfig {
        TrainConfig {
            rollout_workers: 2,
            steps_per_iteration: 128,
            minibatch_size: 64,
            epochs_per_iteration: 2,
            max_iterations: 3,
            hidden: 8,
            early_stop_patience: None,
            checkpoint_iterations: vec![2],
            ..TrainConfig::default()
        }
    }

    fn short_scenario() -> Scenario {
        Scenario { episode_len: 40, ..Scenario::preset("1C1F").unwrap() }
    }

    #[test]
    fn zero_iterations_returns_initial_params() {
        let cfg = TrainConfig { max_iterations: 0, ..small_config() };
        let out = train(&short_scenario(), &cfg, 5, None).unwrap();
        let (shift, gain) = short_scenario().input_normalization();
        let init = PolicyParams::init(3, 1, 8, &mut ChaCha8Rng::seed_from_u64(5))
            .with_input_normalization(&shift, &gain)
            .unwrap();
        assert_eq!(out.params, init);
        assert!(out.curve.is_empty());
    }

    #[test]
    fn same_seed_same_curve() {
        let cfg = small_config();
        let a = train(&short_scenario(), &cfg, 11, None).unwrap();
        let b = train(&short_scenario(), &cfg, 11, None).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.params, b.params);
        assert_eq!(a.curve.len(), 3);
        assert!(a.best_so_far.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(a.checkpoints.iter().map(|c| c.iteration).collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let out = train(&short_scenario(), &small_config(), 1, Some(dir.path())).unwrap();
        for name in [CURVE_FILE, FINAL_FILE, BEST_FILE, &checkpoint_file(2)] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
        let text = std::fs::read_to_string(dir.path().join(CURVE_FILE)).unwrap();
        assert!(text.starts_with("iteration,mean_reward,policy_loss,value_loss,kl,clip_fraction"));
        assert_eq!(text.lines().count(), 1 + out.curve.len());
    }

    #[test]
    fn early_stopping_rule() {
        let flat = vec![-10.0; 40];
        assert!(should_stop_early(&flat, 20, 20, 0.005));
        let improving: Vec<f64> = (0..40).map(|i| -100.0 + 2.0 * i as f64).collect();
        assert!(!should_stop_early(&improving, 20, 20, 0.005));
        assert!(!should_stop_early(&flat[..39], 20, 20, 0.005));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let bad = TrainConfig { gamma: 1.0, ..TrainConfig::default() };
        assert!(bad.validate().unwrap_err().is_config());
        let bad = TrainConfig { clip: 0.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
    }
}
