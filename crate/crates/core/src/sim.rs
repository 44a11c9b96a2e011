//! Closed-loop evaluation of controllers on a demand trace.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::{baseline_action, BandControllerConfig};
use crate::env::{DemandProfile, Environment, Observation};
use crate::error::Result;
use crate::policy::{policy_forward, PolicyParams, RecurrentState};
use crate::scenario::Scenario;

/// Anything that can choose setpoints inside an episode.
pub trait Controller {
    fn name(&self) -> &str;
    /// Clears per-episode memory.
    fn reset(&mut self);
    fn act(&mut self, env: &Environment, obs: &Observation) -> Result<Vec<f64>>;
}

/// The trained network in deterministic mode, carrying its recurrent state.
pub struct PolicyController {
    params: PolicyParams,
    state: RecurrentState,
}

impl PolicyController {
    pub fn new(params: PolicyParams) -> Self {
        let state = RecurrentState::zeros(params.hidden());
        Self { params, state }
    }
}

impl Controller for PolicyController {
    fn name(&self) -> &str {
        "policy"
    }

    fn reset(&mut self) {
        self.state = RecurrentState::zeros(self.params.hidden());
    }

    fn act(&mut self, _env: &Environment, obs: &Observation) -> Result<Vec<f64>> {
        let out = policy_forward(&self.params, &obs.to_vec(), &self.state)?;
        self.state = out.next;
        Ok(out.action_mean)
    }
}

/// Independent uniform setpoints.
pub struct RandomController {
    rng: ChaCha8Rng,
}

impl RandomController {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Controller for RandomController {
    fn name(&self) -> &str {
        "random"
    }

    fn reset(&mut self) {}

    fn act(&mut self, env: &Environment, _obs: &Observation) -> Result<Vec<f64>> {
        Ok((0..env.system().compressors.len()).map(|_| self.rng.random::<f64>()).collect())
    }
}

/// The pressure-band cascade controller, fed the last measured demand.
pub struct BandController {
    config: BandControllerConfig,
}

impl BandController {
    pub fn new(config: BandControllerConfig) -> Self {
        Self { config }
    }
}

impl Controller for BandController {
    fn name(&self) -> &str {
        "baseline"
    }

    fn reset(&mut self) {}

    fn act(&mut self, env: &Environment, _obs: &Observation) -> Result<Vec<f64>> {
        Ok(baseline_action(env.state(), env.measured_demand(), &env.system().compressors, &self.config))
    }
}

/// One simulated timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub t: usize,
    /// Pressure after the step, bar.
    pub pressure: f64,
    pub demand: f64,
    pub setpoints: Vec<f64>,
    pub flows: Vec<f64>,
    pub powers: Vec<f64>,
    pub reward: f64,
    pub energy_cost: f64,
    pub pressure_penalty: f64,
    pub switching_penalty: f64,
    pub violations: u32,
    pub transitions: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub controller: String,
    pub steps: usize,
    pub total_reward: f64,
    pub energy_kwh: f64,
    pub energy_cost_eur: f64,
    pub mean_pressure: f64,
    pub max_pressure: f64,
    pub min_pressure: f64,
    pub steps_above_p_max: usize,
    pub steps_below_p_min: usize,
    pub switch_violations: u64,
    pub switch_count: u64,
    pub terminated: bool,
}

impl EpisodeSummary {
    /// Share of steps whose pressure stayed at or below `p_max`.
    pub fn fraction_within_p_max(&self) -> f64 {
        if self.steps == 0 {
            1.0
        } else {
            1.0 - self.steps_above_p_max as f64 / self.steps as f64
        }
    }
}

/// Runs `controller` over the whole profile (minus the forecast tail).
pub fn run_episode(
    scenario: &Scenario,
    controller: &mut dyn Controller,
    profile: DemandProfile,
    initial_pressure: f64,
    record: bool,
) -> Result<(EpisodeSummary, Vec<StepLog>)> {
    let steps = profile.len().saturating_sub(scenario.horizon);
    let mut env = Environment::new(
        scenario.system.clone(),
        scenario.reward_config(),
        scenario.layout(),
        steps.max(1),
        profile,
        initial_pressure,
    )?;
    controller.reset();
    let system = scenario.system.clone();
    let mut obs = env.observation()?;
    let mut log = Vec::new();
    let mut s = EpisodeSummary {
        controller: controller.name().to_string(),
        steps: 0,
        total_reward: 0.0,
        energy_kwh: 0.0,
        energy_cost_eur: 0.0,
        mean_pressure: 0.0,
        max_pressure: f64::NEG_INFINITY,
        min_pressure: f64::INFINITY,
        steps_above_p_max: 0,
        steps_below_p_min: 0,
        switch_violations: 0,
        switch_count: 0,
        terminated: false,
    };
    let mut pressure_sum = 0.0;
    while !env.is_done() {
        let action = controller.act(&env, &obs)?;
        let tr = env.step(&action)?;
        let out = &tr.outcome;
        let p = out.state.pressure;
        s.steps += 1;
        s.total_reward += out.reward.total;
        s.energy_kwh += out.powers.iter().sum::<f64>() * system.dt / 3600.0;
        s.energy_cost_eur += out.reward.energy_cost;
        pressure_sum += p;
        s.max_pressure = s.max_pressure.max(p);
        s.min_pressure = s.min_pressure.min(p);
        s.steps_above_p_max += usize::from(p > system.p_max);
        s.steps_below_p_min += usize::from(p < system.p_min);
        s.switch_violations += u64::from(out.violations);
        s.switch_count += u64::from(out.transitions);
        s.terminated |= tr.terminated;
        if record {
            log.push(StepLog {
                t: s.steps - 1,
                pressure: p,
                demand: tr.demand,
                setpoints: action,
                flows: out.flows.clone(),
                powers: out.powers.clone(),
                reward: out.reward.total,
                energy_cost: out.reward.energy_cost,
                pressure_penalty: out.reward.pressure_penalty,
                switching_penalty: out.reward.switching_penalty,
                violations: out.violations,
                transitions: out.transitions,
            });
        }
        obs = tr.observation;
    }
    s.mean_pressure = pressure_sum / s.steps.max(1) as f64;
    Ok((s, log))
}

/// Mean episode reward over `episodes` seeded synthetic episodes of the
/// scenario's standard length. Identical seeds give identical demand traces
/// across controllers.
pub fn mean_episode_reward(
    scenario: &Scenario,
    controller: &mut dyn Controller,
    seeds: &[u64],
) -> Result<f64> {
    let mut total = 0.0;
    for &seed in seeds {
        let profile = scenario.synthetic_demand(seed, scenario.episode_samples())?;
        let (summary, _) = run_episode(scenario, controller, profile, scenario.eval_initial_pressure, false)?;
        total += summary.total_reward;
    }
    Ok(total / seeds.len().max(1) as f64)
}

pub fn write_trajectory(path: &Path, log: &[StepLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let x = log.first().map_or(0, |s| s.flows.len());
    let mut header: Vec<String> = vec!["t".into(), "pressure".into(), "demand".into()];
    header.extend((1..=x).map(|i| format!("setpoint_c{i}")));
    header.extend((1..=x).map(|i| format!("flow_c{i}")));
    header.extend((1..=x).map(|i| format!("power_c{i}")));
    header.extend(
        ["reward", "energy_cost", "pressure_penalty", "switching_penalty", "violations", "transitions"]
            .map(String::from),
    );
    w.write_record(&header)?;
    for s in log {
        let mut row = vec![s.t.to_string(), s.pressure.to_string(), s.demand.to_string()];
        row.extend(s.setpoints.iter().map(f64::to_string));
        row.extend(s.flows.iter().map(f64::to_string));
        row.extend(s.powers.iter().map(f64::to_string));
        row.extend([
            s.reward.to_string(),
            s.energy_cost.to_string(),
            s.pressure_penalty.to_string(),
            s.switching_penalty.to_string(),
            s.violations.to_string(),
            s.transitions.to_string(),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
