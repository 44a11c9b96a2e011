//! Episodic control environment around the plant model.
//!
//! Each step turns per-compressor setpoints into delivered flows, advances
//! the tank pressure, and scores the step with a three-part cost:
//! electricity cost, a pressure penalty and a switching penalty. The
//! reward is the negated sum of the three.

pub mod demand;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::plant::{
    compressor_flow, compressor_power, pressure_step, PlantState, SystemConfig, FIXED_SPEED_THRESHOLD,
};

pub use demand::{generate_demand, load_demand_csv, DemandPattern, DemandProfile, DemandShape};

/// Penalty weights as they appear in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    /// Weight on relative overpressure above `p_ref`.
    pub alpha_penalty: f64,
    /// Weight on relative underpressure below `p_min`; 0 disables the term.
    #[serde(default)]
    pub underpressure_penalty: f64,
    /// Cost of one switching-limit violation.
    pub switch_penalty_weight: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { alpha_penalty: 10.0, underpressure_penalty: 10.0, switch_penalty_weight: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub alpha_penalty: f64,
    pub underpressure_penalty: f64,
    pub switch_penalty_weight: f64,
    /// € per kWh, copied from the system configuration.
    pub electricity_price: f64,
}

impl RewardConfig {
    pub fn new(weights: &RewardWeights, system: &SystemConfig) -> Self {
        Self {
            alpha_penalty: weights.alpha_penalty,
            underpressure_penalty: weights.underpressure_penalty,
            switch_penalty_weight: weights.switch_penalty_weight,
            electricity_price: system.electricity_price,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [
            self.alpha_penalty,
            self.underpressure_penalty,
            self.switch_penalty_weight,
            self.electricity_price,
        ];
        if weights.iter().all(|w| *w >= 0.0 && w.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!("reward weights must be finite and >= 0: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// €
    pub energy_cost: f64,
    pub pressure_penalty: f64,
    pub switching_penalty: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(energy_cost: f64, pressure_penalty: f64, switching_penalty: f64) -> Self {
        Self {
            energy_cost,
            pressure_penalty,
            switching_penalty,
            total: -(energy_cost + pressure_penalty + switching_penalty),
        }
    }

    pub const ZERO: Self =
        Self { energy_cost: 0.0, pressure_penalty: 0.0, switching_penalty: 0.0, total: -0.0 };
}

/// Electricity cost of one timestep, €.
pub fn energy_cost(powers_kw: &[f64], config: &RewardConfig, dt: f64) -> f64 {
    powers_kw.iter().map(|p| p * (dt / 3600.0) * config.electricity_price).sum()
}

/// Proportional penalty on pressure above the reference.
pub fn pressure_penalty(p_actual: f64, p_ref: f64, alpha: f64) -> f64 {
    alpha * (p_actual / p_ref - 1.0).max(0.0)
}

/// Proportional penalty on pressure below the lower operating limit.
pub fn underpressure_penalty(p_actual: f64, p_min: f64, weight: f64) -> f64 {
    weight * (1.0 - p_actual / p_min).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchUpdate {
    pub allowances: Vec<f64>,
    /// On/off transitions attempted without a full unit of allowance.
    pub violations: u32,
    pub transitions: u32,
}

/// Rolling switch counter for fixed-speed units.
///
/// Every step each allowance is refilled by `limit * dt / 3600` (capped at the
/// hourly limit); an on/off transition then consumes one unit. A transition
/// with less than one unit available is a violation and empties the allowance.
pub fn update_switch_counter(
    state: &PlantState,
    new_levels: &[f64],
    specs: &[crate::plant::CompressorSpec],
    dt: f64,
) -> SwitchUpdate {
    let mut violations = 0;
    let mut transitions = 0;
    let allowances = specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            if !spec.is_fixed_speed() {
                return 0.0;
            }
            let limit = spec.switch_limit();
            let mut allowance = (state.switch_allowance[i] + limit * dt / 3600.0).min(limit);
            let was_on = state.levels[i] >= FIXED_SPEED_THRESHOLD;
            let is_on = new_levels[i] >= FIXED_SPEED_THRESHOLD;
            if was_on != is_on {
                transitions += 1;
                if allowance < 1.0 {
                    violations += 1;
                    allowance = 0.0;
                } else {
                    allowance -= 1.0;
                }
            }
            allowance
        })
        .collect();
    SwitchUpdate { allowances, violations, transitions }
}

/// How observations are laid out and scaled for the agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationLayout {
    pub horizon: usize,
    pub n_compressors: usize,
    pub p_ref: f64,
    pub demand_ceiling: f64,
}

impl ObservationLayout {
    /// Flattened width: pressure, forecast vector, compressor levels.
    pub fn width(&self) -> usize {
        1 + self.horizon + self.n_compressors
    }

    pub fn normalize_pressure(&self, pressure: f64) -> f64 {
        (pressure - self.p_ref) / self.p_ref
    }

    pub fn denormalize_pressure(&self, pressure_norm: f64) -> f64 {
        self.p_ref * (1.0 + pressure_norm)
    }

    pub fn forecast_index(&self, k: usize) -> usize {
        1 + k
    }

    pub fn level_index(&self, i: usize) -> usize {
        1 + self.horizon + i
    }

    /// Feature labels: `PR`, `F1..FY`, `CL1..CLX`.
    pub fn labels(&self) -> Vec<String> {
        std::iter::once("PR".to_string())
            .chain((1..=self.horizon).map(|k| format!("F{k}")))
            .chain((1..=self.n_compressors).map(|i| format!("CL{i}")))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// `(p - p_ref) / p_ref`
    pub pressure_norm: f64,
    /// Upcoming demand divided by the ceiling.
    pub forecast: Vec<f64>,
    pub levels: Vec<f64>,
}

impl Observation {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + self.forecast.len() + self.levels.len());
        v.push(self.pressure_norm);
        v.extend_from_slice(&self.forecast);
        v.extend_from_slice(&self.levels);
        v
    }

    pub fn from_slice(values: &[f64], layout: &ObservationLayout) -> Result<Self> {
        if values.len() != layout.width() {
            return Err(Error::Shape {
                what: "observation".into(),
                expected: layout.width(),
                actual: values.len(),
            });
        }
        let h = layout.horizon;
        Ok(Self {
            pressure_norm: values[0],
            forecast: values[1..1 + h].to_vec(),
            levels: values[1 + h..].to_vec(),
        })
    }
}

/// Builds the agent's view of the plant at `state.step_index`.
///
/// The forecast holds the demand for the next `horizon` intervals, starting
/// with the interval the upcoming action will act against.
pub fn make_observation(
    state: &PlantState,
    profile: &DemandProfile,
    layout: &ObservationLayout,
) -> Result<Observation> {
    let start = state.step_index;
    let end = start + layout.horizon;
    if end > profile.len() {
        return Err(Error::EndOfData { step: start, horizon: layout.horizon, len: profile.len() });
    }
    if state.levels.len() != layout.n_compressors {
        return Err(Error::Shape {
            what: "levels".into(),
            expected: layout.n_compressors,
            actual: state.levels.len(),
        });
    }
    Ok(Observation {
        pressure_norm: layout.normalize_pressure(state.pressure),
        forecast: profile.samples[start..end].iter().map(|d| d / profile.ceiling).collect(),
        levels: state.levels.clone(),
    })
}

/// Result of one plant step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: PlantState,
    /// Delivered flow per compressor, m³/s.
    pub flows: Vec<f64>,
    /// Electrical power per compressor, kW.
    pub powers: Vec<f64>,
    pub reward: RewardBreakdown,
    pub violations: u32,
    pub transitions: u32,
    /// Pressure left the numerical safety band `[0.5 p_min, 1.5 p_max]`.
    pub diverged: bool,
}

/// Advances the plant by one timestep. Pure function of its inputs.
///
/// The pressure penalties are evaluated on the post-step pressure.
pub fn env_step(
    state: &PlantState,
    action: &[f64],
    demand_now: f64,
    system: &SystemConfig,
    reward: &RewardConfig,
) -> Result<StepOutcome> {
    let n = system.compressors.len();
    if action.len() != n {
        return Err(Error::Shape { what: "action".into(), expected: n, actual: action.len() });
    }
    ensure_finite("demand", demand_now)?;
    if demand_now < 0.0 {
        return Err(Error::Domain(format!("demand must be >= 0, got {demand_now}")));
    }

    let flows = system
        .compressors
        .iter()
        .zip(action)
        .map(|(spec, &a)| compressor_flow(spec, a))
        .collect::<Result<Vec<_>>>()?;
    let levels: Vec<f64> = system
        .compressors
        .iter()
        .zip(&flows)
        .map(|(spec, f)| (f / spec.max_flow).clamp(0.0, 1.0))
        .collect();
    let powers = system
        .compressors
        .iter()
        .zip(&levels)
        .map(|(spec, &l)| compressor_power(spec, l))
        .collect::<Result<Vec<_>>>()?;

    let switches = update_switch_counter(state, &levels, &system.compressors, system.dt);

    let net_volume = (flows.iter().sum::<f64>() - demand_now) * system.dt;
    let pressure = pressure_step(state, net_volume, system)?;

    let energy = energy_cost(&powers, reward, system.dt);
    let pressure_cost = pressure_penalty(pressure, system.p_ref, reward.alpha_penalty)
        + underpressure_penalty(pressure, system.p_min, reward.underpressure_penalty);
    let switching = f64::from(switches.violations) * reward.switch_penalty_weight;

    let diverged =
        !pressure.is_finite() || pressure < 0.5 * system.p_min || pressure > 1.5 * system.p_max;

    Ok(StepOutcome {
        state: PlantState {
            pressure,
            levels,
            switch_allowance: switches.allowances,
            step_index: state.step_index + 1,
        },
        flows,
        powers,
        reward: RewardBreakdown::new(energy, pressure_cost, switching),
        violations: switches.violations,
        transitions: switches.transitions,
        diverged,
    })
}

#[derive(Debug, Clone)]
pub struct Transition {
    /// Observation after the step (still valid after truncation).
    pub observation: Observation,
    pub outcome: StepOutcome,
    /// Demand consumed during the step, m³/s.
    pub demand: f64,
    /// Pressure blew out of the safety band.
    pub terminated: bool,
    /// Episode length reached.
    pub truncated: bool,
}

impl Transition {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// A single-owner episode: plant state plus the demand trace it consumes.
#[derive(Debug, Clone)]
pub struct Environment {
    system: SystemConfig,
    reward: RewardConfig,
    layout: ObservationLayout,
    episode_len: usize,
    profile: DemandProfile,
    state: PlantState,
    done: bool,
}

impl Environment {
    pub fn new(
        system: SystemConfig,
        reward: RewardConfig,
        layout: ObservationLayout,
        episode_len: usize,
        profile: DemandProfile,
        initial_pressure: f64,
    ) -> Result<Self> {
        system.validate()?;
        reward.validate()?;
        if episode_len == 0 {
            return Err(Error::Config("episode length must be > 0".into()));
        }
        let state = PlantState::initial(&system, initial_pressure);
        let mut env = Self { system, reward, layout, episode_len, profile: profile.clone(), state, done: false };
        env.reset(profile, initial_pressure)?;
        Ok(env)
    }

    /// Starts a fresh episode on `profile`, which must cover
    /// `episode_len + horizon` samples.
    pub fn reset(&mut self, profile: DemandProfile, initial_pressure: f64) -> Result<Observation> {
        let needed = self.episode_len + self.layout.horizon;
        if profile.len() < needed {
            return Err(Error::EndOfData { step: 0, horizon: needed, len: profile.len() });
        }
        self.state = PlantState::initial(&self.system, initial_pressure);
        self.state.validate(&self.system)?;
        self.profile = profile;
        self.done = false;
        self.observation()
    }

    pub fn observation(&self) -> Result<Observation> {
        let layout = ObservationLayout { demand_ceiling: self.profile.ceiling, ..self.layout };
        make_observation(&self.state, &self.profile, &layout)
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    pub fn system(&self) -> &SystemConfig {
        &self.system
    }

    pub fn layout(&self) -> &ObservationLayout {
        &self.layout
    }

    pub fn profile(&self) -> &DemandProfile {
        &self.profile
    }

    pub fn episode_len(&self) -> usize {
        self.episode_len
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Demand that the next step will consume, m³/s.
    pub fn demand_now(&self) -> f64 {
        self.profile.samples[self.state.step_index]
    }

    /// Most recent measured demand (the previous interval, or the current
    /// one at episode start).
    pub fn measured_demand(&self) -> f64 {
        self.profile.samples[self.state.step_index.saturating_sub(1)]
    }

    pub fn step(&mut self, action: &[f64]) -> Result<Transition> {
        if self.done {
            return Err(Error::Usage("episode already finished; call reset first".into()));
        }
        let demand = self.demand_now();
        let outcome = env_step(&self.state, action, demand, &self.system, &self.reward)?;
        self.state = outcome.state.clone();
        let terminated = outcome.diverged;
        let truncated = !terminated && self.state.step_index >= self.episode_len;
        self.done = terminated || truncated;
        let observation = if outcome.state.pressure.is_finite() {
            self.observation()?
        } else {
            Observation {
                pressure_norm: 0.0,
                forecast: vec![0.0; self.layout.horizon],
                levels: outcome.state.levels.clone(),
            }
        };
        Ok(Transition { observation, outcome, demand, terminated, truncated })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::CompressorSpec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn system(compressors: Vec<CompressorSpec>, volume: f64) -> SystemConfig {
        SystemConfig {
            compressors,
            storage_volume: volume,
            p_min: 7.0,
            p_max: 8.5,
            p_ref: 8.0,
            dt: 5.0,
            electricity_price: 0.30,
        }
    }

    fn reward_cfg() -> RewardConfig {
        RewardConfig {
            alpha_penalty: 10.0,
            underpressure_penalty: 10.0,
            switch_penalty_weight: 0.05,
            electricity_price: 0.30,
        }
    }

    fn three_units() -> Vec<CompressorSpec> {
        vec![
            CompressorSpec::fixed_speed(1, 30.0, 0.01, 6),
            CompressorSpec::variable_speed(2, 30.0, 0.01, 0.25),
            CompressorSpec::variable_speed(3, 30.0, 0.01, 0.25),
        ]
    }

    #[test]
    fn energy_cost_cases() {
        let rc = reward_cfg();
        assert_eq!(energy_cost(&[0.0, 0.0, 0.0], &rc, 5.0), 0.0);
        assert_relative_eq!(energy_cost(&[30.0], &rc, 5.0), 0.0125, max_relative = 1e-12);
        assert_relative_eq!(energy_cost(&[30.0, 15.0], &rc, 5.0), 0.01875, max_relative = 1e-12);
    }

    #[test]
    fn pressure_penalty_cases() {
        assert_eq!(pressure_penalty(8.0, 8.0, 1.0), 0.0);
        assert_relative_eq!(pressure_penalty(8.4, 8.0, 1.0), 0.05, max_relative = 1e-12);
        assert_eq!(pressure_penalty(7.5, 8.0, 10.0), 0.0);
        assert_eq!(underpressure_penalty(7.5, 7.0, 10.0), 0.0);
        assert_relative_eq!(underpressure_penalty(6.3, 7.0, 10.0), 1.0, max_relative = 1e-12);
    }

    fn fixed_state(level: f64, allowance: f64) -> (PlantState, Vec<CompressorSpec>) {
        let specs = vec![CompressorSpec::fixed_speed(1, 30.0, 0.01, 4)];
        let state = PlantState { pressure: 8.0, levels: vec![level], switch_allowance: vec![allowance], step_index: 0 };
        (state, specs)
    }

    #[test]
    fn switch_counter_refills_without_transition() {
        let (state, specs) = fixed_state(0.0, 2.0);
        let up = update_switch_counter(&state, &[0.0], &specs, 5.0);
        assert_relative_eq!(up.allowances[0], 2.0 + 4.0 * 5.0 / 3600.0, max_relative = 1e-12);
        assert_eq!(up.violations, 0);
    }

    #[test]
    fn switch_counter_consumes_on_transition() {
        let (state, specs) = fixed_state(0.0, 1.5);
        let up = update_switch_counter(&state, &[1.0], &specs, 5.0);
        assert_relative_eq!(up.allowances[0], 0.5 + 4.0 * 5.0 / 3600.0, max_relative = 1e-12);
        assert_eq!((up.violations, up.transitions), (0, 1));
    }

    #[test]
    fn switch_counter_flags_violation() {
        let (state, specs) = fixed_state(1.0, 0.3);
        let up = update_switch_counter(&state, &[0.0], &specs, 5.0);
        assert_eq!(up.allowances[0], 0.0);
        assert_eq!(up.violations, 1);
    }

    #[test]
    fn switch_counter_caps_at_limit() {
        let (state, specs) = fixed_state(1.0, 4.0);
        let up = update_switch_counter(&state, &[1.0], &specs, 5.0);
        assert_eq!(up.allowances[0], 4.0);
    }

    #[test]
    fn idle_plant_without_demand_is_static() {
        let sys = system(three_units(), 5.0);
        let state = PlantState::initial(&sys, 8.0);
        let out = env_step(&state, &[0.0, 0.0, 0.0], 0.0, &sys, &reward_cfg()).unwrap();
        assert_eq!(out.state.pressure, 8.0);
        assert_eq!(out.reward.energy_cost, 0.0);
    }

    #[test]
    fn full_variable_unit_raises_pressure() {
        let sys = system(vec![CompressorSpec::variable_speed(1, 30.0, 0.05, 0.2)], 5.0);
        let state = PlantState::initial(&sys, 7.0);
        let out = env_step(&state, &[1.0], 0.0, &sys, &reward_cfg()).unwrap();
        assert_relative_eq!(out.state.pressure, 7.35, max_relative = 1e-12);
    }

    #[test]
    fn balanced_supply_keeps_pressure() {
        let sys = system(three_units(), 5.0);
        let state = PlantState::initial(&sys, 7.6);
        let out = env_step(&state, &[1.0, 0.5, 0.5], 0.02, &sys, &reward_cfg()).unwrap();
        assert_eq!(out.state.pressure, 7.6);
    }

    #[test]
    fn bad_actions_are_rejected() {
        let sys = system(three_units(), 5.0);
        let state = PlantState::initial(&sys, 8.0);
        assert!(env_step(&state, &[0.0, 1.2, 0.0], 0.0, &sys, &reward_cfg()).is_err());
        assert!(env_step(&state, &[0.0, 0.0], 0.0, &sys, &reward_cfg()).is_err());
        assert!(env_step(&state, &[0.0, 0.0, 0.0], -1.0, &sys, &reward_cfg()).is_err());
    }

    #[test]
    fn observation_normalization() {
        let sys = system(three_units(), 5.0);
        let layout = ObservationLayout { horizon: 2, n_compressors: 3, p_ref: 8.0, demand_ceiling: 0.03 };
        let profile = DemandProfile::new(vec![0.03, 0.015, 0.0], 0.03).unwrap();
        let mut state = PlantState::initial(&sys, 8.0);
        let obs = make_observation(&state, &profile, &layout).unwrap();
        assert_eq!(obs.pressure_norm, 0.0);
        assert_eq!(obs.forecast, vec![1.0, 0.5]);
        state.pressure = 8.3;
        let obs = make_observation(&state, &profile, &layout).unwrap();
        assert_relative_eq!(obs.pressure_norm, 0.0375, max_relative = 1e-12);
        state.step_index = 2;
        assert!(matches!(make_observation(&state, &profile, &layout), Err(Error::EndOfData { .. })));
    }

    #[test]
    fn observation_flattening_round_trips() {
        let layout = ObservationLayout { horizon: 3, n_compressors: 3, p_ref: 8.0, demand_ceiling: 0.03 };
        let obs = Observation { pressure_norm: -0.1, forecast: vec![0.1, 0.2, 0.3], levels: vec![1.0, 0.4, 0.0] };
        assert_eq!(Observation::from_slice(&obs.to_vec(), &layout).unwrap(), obs);
        assert_eq!(layout.labels(), ["PR", "F1", "F2", "F3", "CL1", "CL2", "CL3"]);
    }

    fn environment(episode_len: usize, demand: f64) -> Environment {
        let sys = system(three_units(), 5.0);
        let layout = ObservationLayout { horizon: 1, n_compressors: 3, p_ref: 8.0, demand_ceiling: 0.03 };
        let profile = DemandProfile::constant(demand, episode_len + 1, 0.03).unwrap();
        let rc = RewardConfig::new(&RewardWeights::default(), &sys);
        Environment::new(sys, rc, layout, episode_len, profile, 8.0).unwrap()
    }

    #[test]
    fn idle_episode_has_zero_return() {
        let mut env = environment(50, 0.0);
        let mut total = 0.0;
        loop {
            let t = env.step(&[0.0, 0.0, 0.0]).unwrap();
            total += t.outcome.reward.total;
            if t.done() {
                assert!(t.truncated && !t.terminated);
                break;
            }
        }
        assert_eq!(total, 0.0);
        assert!(matches!(env.step(&[0.0, 0.0, 0.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn runaway_pressure_terminates() {
        let mut env = environment(10_000, 0.0);
        let mut steps = 0;
        loop {
            steps += 1;
            let t = env.step(&[1.0, 1.0, 1.0]).unwrap();
            if t.done() {
                assert!(t.terminated);
                assert!(t.outcome.state.pressure > 1.5 * 8.5);
                break;
            }
        }
        assert!(steps < 10_000);
    }

    #[test]
    fn env_matches_manual_resimulation() {
        let sys = system(three_units(), 5.0);
        let rc = reward_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut state = PlantState::initial(&sys, 7.8);
        let mut manual = 7.8;
        for _ in 0..500 {
            let action: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let demand = rng.random::<f64>() * 0.03;
            let out = env_step(&state, &action, demand, &sys, &rc).unwrap();
            let supplied: f64 = sys
                .compressors
                .iter()
                .zip(&action)
                .map(|(s, &a)| compressor_flow(s, a).unwrap())
                .sum();
            let probe = PlantState { pressure: manual, ..state.clone() };
            manual = pressure_step(&probe, (supplied - demand) * sys.dt, &sys).unwrap();
            assert!((out.state.pressure - manual).abs() <= 1e-12 * manual);
            state = out.state;
        }
    }

    proptest! {
        #[test]
        fn reward_identity_and_allowance_bounds(seed in any::<u64>()) {
            let sys = system(three_units(), 5.0);
            let rc = reward_cfg();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut state = PlantState::initial(&sys, 6.5 + 2.5 * rng.random::<f64>());
            for _ in 0..50 {
                let action: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
                let out = env_step(&state, &action, rng.random::<f64>() * 0.03, &sys, &rc).unwrap();
                let r = out.reward;
                prop_assert_eq!(r.total, -(r.energy_cost + r.pressure_penalty + r.switching_penalty));
                prop_assert!(r.energy_cost >= 0.0 && r.pressure_penalty >= 0.0 && r.switching_penalty >= 0.0);
                for (spec, a) in sys.compressors.iter().zip(&out.state.switch_allowance) {
                    prop_assert!(*a >= 0.0 && *a <= spec.switch_limit());
                }
                state = out.state;
            }
        }
    }
}
