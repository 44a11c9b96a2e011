//! Experience collection with lockstep environment workers.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::compute_gae;
use crate::env::Environment;
use crate::error::Result;
use crate::policy::{squash, PolicyParams};
use crate::scenario::Scenario;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log density of `u` under a diagonal Gaussian.
pub fn gaussian_log_prob(u: &[f64], mu: &[f64], log_std: &[f64]) -> f64 {
    u.iter()
        .zip(mu)
        .zip(log_std)
        .map(|((u, m), ls)| {
            let z = (u - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum()
}

/// A fixed-length slice of one worker's trajectory, the unit of truncated
/// backpropagation through time.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub obs: Vec<Vec<f64>>,
    /// Pre-squash action samples.
    pub u: Vec<Vec<f64>>,
    /// Pre-squash means at collection time.
    pub mu_old: Vec<Vec<f64>>,
    pub log_prob: Vec<f64>,
    pub value: Vec<f64>,
    pub reward: Vec<f64>,
    pub done: Vec<bool>,
    /// The recurrent state is zeroed before this step (new episode).
    pub episode_start: Vec<bool>,
    pub advantage: Vec<f64>,
    pub returns: Vec<f64>,
    /// Recurrent state entering the first step.
    pub h0: Vec<f64>,
    pub c0: Vec<f64>,
}

impl Chunk {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

/// Trajectories of one iteration, cut into sequence chunks, with
/// normalized advantages.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub chunks: Vec<Chunk>,
    /// `log_std` of the policy that collected the batch.
    pub log_std_old: Vec<f64>,
    pub seq_len: usize,
}

impl RolloutBatch {
    pub fn num_steps(&self) -> usize {
        self.chunks.iter().map(Chunk::len).sum()
    }

    /// Shifts and scales every advantage to zero mean and unit variance.
    pub fn normalize_advantages(&mut self) {
        let n = self.num_steps() as f64;
        if n == 0.0 {
            return;
        }
        let all = || self.chunks.iter().flat_map(|c| c.advantage.iter());
        let mean = all().sum::<f64>() / n;
        let var = all().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let scale = if var.sqrt() > 1e-12 { 1.0 / var.sqrt() } else { 1.0 };
        for c in &mut self.chunks {
            for a in &mut c.advantage {
                *a = (*a - mean) * scale;
            }
        }
    }
}

/// Episode-level statistics of one collection round.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutStats {
    pub completed_returns: Vec<f64>,
    pub steps: usize,
    pub reward_sum: f64,
    pub diverged_episodes: usize,
}

struct Worker {
    env: Environment,
    rng: ChaCha8Rng,
    h: Array1<f64>,
    c: Array1<f64>,
    obs: Vec<f64>,
    episode_start: bool,
    episode_return: f64,
    discounted_return: f64,
}

struct StepRecord {
    obs: Vec<f64>,
    u: Vec<f64>,
    mu: Vec<f64>,
    log_prob: f64,
    value: f64,
    reward: f64,
    done: bool,
    episode_start: bool,
    h: Vec<f64>,
    c: Vec<f64>,
}

/// Running variance of discounted returns, used to scale rewards.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReturnScaler {
    count: f64,
    mean: f64,
    m2: f64,
}

impl ReturnScaler {
    pub fn update(&mut self, x: f64) {
        self.count += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (x - self.mean);
    }

    /// Multiplier applied to raw rewards.
    pub fn scale(&self) -> f64 {
        if self.count < 2.0 {
            return 1.0;
        }
        let var = self.m2 / self.count;
        1.0 / (var + 1e-8).sqrt()
    }
}

/// Owns one environment per worker and steps them in lockstep with a single
/// batched network evaluation per timestep. Deterministic for a given seed
/// and worker count.
pub struct RolloutCollector {
    scenario: Scenario,
    workers: Vec<Worker>,
    hidden: usize,
    scaler: Option<ReturnScaler>,
}

fn new_episode(scenario: &Scenario, env: &mut Environment, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let profile = scenario.synthetic_demand(rng.random(), scenario.episode_samples())?;
    let [lo, hi] = scenario.train_initial_pressure;
    let p0 = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    Ok(env.reset(profile, p0)?.to_vec())
}

impl RolloutCollector {
    /// With `scale_rewards` the stored rewards are divided by the running
    /// standard deviation of discounted returns; the value head then predicts
    /// returns in those units.
    pub fn new(scenario: &Scenario, workers: usize, hidden: usize, seed: u64, scale_rewards: bool) -> Result<Self> {
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let mut list = Vec::with_capacity(workers);
        for _ in 0..workers.max(1) {
            let mut rng = ChaCha8Rng::from_rng(&mut master);
            let profile = scenario.synthetic_demand(rng.random(), scenario.episode_samples())?;
            let mut env = scenario.environment(profile, scenario.eval_initial_pressure)?;
            let obs = new_episode(scenario, &mut env, &mut rng)?;
            list.push(Worker {
                env,
                rng,
                h: Array1::zeros(hidden),
                c: Array1::zeros(hidden),
                obs,
                episode_start: true,
                episode_return: 0.0,
                discounted_return: 0.0,
            });
        }
        let scaler = scale_rewards.then(ReturnScaler::default);
        Ok(Self { scenario: scenario.clone(), workers: list, hidden, scaler })
    }

    pub fn num_workers(&self) -> usize {
        self.workers.len()
    }

    /// Collects `steps_per_worker` transitions from every worker.
    pub fn collect(
        &mut self,
        params: &PolicyParams,
        steps_per_worker: usize,
        seq_len: usize,
        gamma: f64,
        lambda: f64,
    ) -> Result<(RolloutBatch, RolloutStats)> {
        let n = self.workers.len();
        let obs_dim = params.obs_dim();
        let log_std: Vec<f64> = params.log_std.to_vec();
        let std: Vec<f64> = log_std.iter().map(|l| l.exp()).collect();
        let mut records: Vec<Vec<StepRecord>> = (0..n).map(|_| Vec::with_capacity(steps_per_worker)).collect();
        let mut stats = RolloutStats::default();

        for _ in 0..steps_per_worker {
            let x = Array2::from_shape_fn((n, obs_dim), |(w, j)| self.workers[w].obs[j]);
            let h0 = Array2::from_shape_fn((n, self.hidden), |(w, j)| self.workers[w].h[j]);
            let c0 = Array2::from_shape_fn((n, self.hidden), |(w, j)| self.workers[w].c[j]);
            let (out, _) = params.forward_sequence(&[x], None, h0.clone(), c0.clone());

            for (w, worker) in self.workers.iter_mut().enumerate() {
                let mu: Vec<f64> = out.mu[0].row(w).to_vec();
                let u: Vec<f64> = mu
                    .iter()
                    .zip(&std)
                    .map(|(m, s)| {
                        let e: f64 = StandardNormal.sample(&mut worker.rng);
                        m + s * e
                    })
                    .collect();
                let action: Vec<f64> = u.iter().map(|&v| squash(v)).collect();
                let tr = worker.env.step(&action)?;
                let raw = tr.outcome.reward.total;
                let mut reward = match self.scaler.as_mut() {
                    Some(scaler) => {
                        worker.discounted_return = gamma * worker.discounted_return + raw;
                        scaler.update(worker.discounted_return);
                        raw * scaler.scale()
                    }
                    None => raw,
                };
                if tr.truncated {
                    // Time-limit cut: bootstrap the value of the state the episode would continue from.
                    let next_obs = Array2::from_shape_vec((1, obs_dim), tr.observation.to_vec()).expect("row");
                    let hn = out.h_last.row(w).to_owned().insert_axis(Axis(0));
                    let cn = out.c_last.row(w).to_owned().insert_axis(Axis(0));
                    let (next, _) = params.forward_sequence(&[next_obs], None, hn, cn);
                    reward += gamma * next.value[0][0];
                }
                worker.episode_return += tr.outcome.reward.total;
                stats.reward_sum += tr.outcome.reward.total;
                stats.steps += 1;
                records[w].push(StepRecord {
                    obs: std::mem::take(&mut worker.obs),
                    log_prob: gaussian_log_prob(&u, &mu, &log_std),
                    u,
                    mu,
                    value: out.value[0][w],
                    reward,
                    done: tr.done(),
                    episode_start: worker.episode_start,
                    h: h0.row(w).to_vec(),
                    c: c0.row(w).to_vec(),
                });
                if tr.done() {
                    if tr.terminated {
                        stats.diverged_episodes += 1;
                        log::debug!("worker {w}: pressure left the simulation band, resetting");
                    }
                    stats.completed_returns.push(worker.episode_return);
                    worker.episode_return = 0.0;
                    worker.discounted_return = 0.0;
                    worker.obs = new_episode(&self.scenario, &mut worker.env, &mut worker.rng)?;
                    worker.h.fill(0.0);
                    worker.c.fill(0.0);
                    worker.episode_start = true;
                } else {
                    worker.obs = tr.observation.to_vec();
                    worker.h.assign(&out.h_last.row(w));
                    worker.c.assign(&out.c_last.row(w));
                    worker.episode_start = false;
                }
            }
        }

        // Bootstrap values for the unfinished tails.
        let x = Array2::from_shape_fn((n, obs_dim), |(w, j)| self.workers[w].obs[j]);
        let h0 = Array2::from_shape_fn((n, self.hidden), |(w, j)| self.workers[w].h[j]);
        let c0 = Array2::from_shape_fn((n, self.hidden), |(w, j)| self.workers[w].c[j]);
        let (tail, _) = params.forward_sequence(&[x], None, h0, c0);

        let mut chunks = Vec::new();
        for (w, recs) in records.into_iter().enumerate() {
            let rewards: Vec<f64> = recs.iter().map(|r| r.reward).collect();
            let values: Vec<f64> = recs.iter().map(|r| r.value).collect();
            let dones: Vec<bool> = recs.iter().map(|r| r.done).collect();
            let (adv, ret) = compute_gae(&rewards, &values, &dones, tail.value[0][w], gamma, lambda);
            let mut start = 0;
            while start < recs.len() {
                let end = (start + seq_len).min(recs.len());
                let slice = &recs[start..end];
                chunks.push(Chunk {
                    obs: slice.iter().map(|r| r.obs.clone()).collect(),
                    u: slice.iter().map(|r| r.u.clone()).collect(),
                    mu_old: slice.iter().map(|r| r.mu.clone()).collect(),
                    log_prob: slice.iter().map(|r| r.log_prob).collect(),
                    value: slice.iter().map(|r| r.value).collect(),
                    reward: slice.iter().map(|r| r.reward).collect(),
                    done: slice.iter().map(|r| r.done).collect(),
                    episode_start: slice.iter().map(|r| r.episode_start).collect(),
                    advantage: adv[start..end].to_vec(),
                    returns: ret[start..end].to_vec(),
                    h0: slice[0].h.clone(),
                    c0: slice[0].c.clone(),
                });
                start = end;
            }
        }
        let mut batch = RolloutBatch { chunks, log_std_old: log_std, seq_len };
        batch.normalize_advantages();
        Ok((batch, stats))
    }
}
