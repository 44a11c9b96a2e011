use std::path::Path;

use airctl::config::{ConfigFile, RunConfig};
use airctl::env::{load_demand_csv, DemandPattern, DemandProfile};
use airctl::explain::{
    case_attribution, global_attribution, perturbation_sweep, saliency_profile, subsample, time_resolved_attribution,
    write_case_json, write_global_csv, write_pattern_csv, write_saliency_csv, write_sweep_csv, write_time_csv,
    CaseGrid, StateSampler, SweepSpec, TimeScenario,
};
use airctl::policy::{load_params, PolicyParams};
use airctl::ppo::train;
use airctl::sim::{run_episode, write_trajectory, BandController, Controller, PolicyController, RandomController};
use airctl::Error;
use anyhow::Context;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::manifest::{ManifestBuilder, MANIFEST_FILE};
use crate::{Cli, Command, ControllerKind, ExplainKind};

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let config = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let run = config.resolve(cli.scenario.as_deref())?;
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let name = match &cli.command {
        Command::Simulate { .. } => "simulate",
        Command::Train { .. } => "train",
        Command::Explain { .. } => "explain",
    };
    let mut manifest =
        ManifestBuilder::start(&cli.out, name, &run.scenario.name, run.hash(), run.scenario.hash(), cli.seed);
    match &cli.command {
        Command::Simulate { controller, policy, demand, steps } => {
            simulate(&run, cli.seed, *controller, policy.as_deref(), demand.as_deref(), *steps, &mut manifest)?
        }
        Command::Train { iterations, workers } => {
            train_cmd(run, cli.seed, *iterations, *workers, &cli.out, &mut manifest)?
        }
        Command::Explain { kind, policy, excitation } => {
            explain(&run, cli.seed, *kind, policy, excitation, &mut manifest)?
        }
    }
    let m = manifest.finish()?;
    log::info!("{} finished in {:.1} s; outputs in {}", m.command, m.wall_clock_s, cli.out.display());
    Ok(())
}

fn load_policy(run: &RunConfig, path: &Path) -> anyhow::Result<PolicyParams> {
    if !path.is_file() {
        return Err(Error::Config(format!("policy file {} not found", path.display())).into());
    }
    let s = &run.scenario;
    let (params, _) = load_params(path, Some(&s.hash()), Some((s.obs_dim(), s.act_dim())))?;
    Ok(params)
}

fn demand_profile(run: &RunConfig, seed: u64, source: Option<&str>, steps: usize) -> anyhow::Result<DemandProfile> {
    let s = &run.scenario;
    let synthetic = |pattern: DemandPattern| -> anyhow::Result<DemandProfile> {
        let mut scenario = s.clone();
        scenario.demand_pattern = pattern;
        Ok(scenario.synthetic_demand(seed, steps + s.horizon)?)
    };
    match source {
        None => synthetic(s.demand_pattern),
        Some(src) => match src.strip_prefix("synthetic:") {
            Some(pattern) => synthetic(pattern.parse()?),
            None => Ok(load_demand_csv(Path::new(src), s.system.dt, s.demand_ceiling)?),
        },
    }
}

fn simulate(
    run: &RunConfig,
    seed: u64,
    kind: ControllerKind,
    policy: Option<&Path>,
    demand: Option<&str>,
    steps: usize,
    manifest: &mut ManifestBuilder,
) -> anyhow::Result<()> {
    let s = &run.scenario;
    let mut controller: Box<dyn Controller> = match kind {
        ControllerKind::Baseline => Box::new(BandController::new(s.baseline.clone())),
        ControllerKind::Random => Box::new(RandomController::new(seed)),
        ControllerKind::Policy => {
            let path = policy.ok_or_else(|| Error::Config("--controller policy needs --policy <file>".into()))?;
            Box::new(PolicyController::new(load_policy(run, path)?))
        }
    };
    if steps == 0 {
        return Err(Error::Config("--steps must be > 0".into()).into());
    }
    let profile = demand_profile(run, seed, demand, steps)?;
    if profile.len() <= s.horizon {
        return Err(Error::Config(format!("demand trace of {} samples is shorter than the horizon", profile.len())).into());
    }
    let (summary, log) = run_episode(s, controller.as_mut(), profile, s.eval_initial_pressure, true)?;
    write_trajectory(&manifest.artifact("trajectory.csv"), &log)?;
    std::fs::write(manifest.artifact("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    log::info!(
        "{}: {:.3} kWh, mean pressure {:.3} bar, max {:.3} bar",
        summary.controller,
        summary.energy_kwh,
        summary.mean_pressure,
        summary.max_pressure
    );
    Ok(())
}

fn train_cmd(
    mut run: RunConfig,
    seed: u64,
    iterations: Option<usize>,
    workers: Option<usize>,
    out: &Path,
    manifest: &mut ManifestBuilder,
) -> anyhow::Result<()> {
    if let Some(n) = iterations {
        run.train.max_iterations = n;
    }
    if let Some(n) = workers {
        run.train.rollout_workers = n;
    }
    let outcome = train(&run.scenario, &run.train, seed, Some(out))?;
    std::fs::write(manifest.artifact("train_config.json"), serde_json::to_string_pretty(&run)?)?;
    for entry in std::fs::read_dir(out)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if name != MANIFEST_FILE {
            manifest.record(name);
        }
    }
    log::info!(
        "trained {} iterations (best {} at iteration {}){}",
        outcome.curve.len(),
        outcome.best_so_far.last().copied().unwrap_or(f64::NAN),
        outcome.best_iteration,
        if outcome.stopped_early { ", stopped early" } else { "" }
    );
    Ok(())
}

fn explain(
    run: &RunConfig,
    seed: u64,
    kind: ExplainKind,
    policy: &Path,
    excitation: &str,
    manifest: &mut ManifestBuilder,
) -> anyhow::Result<()> {
    let params = load_policy(run, policy)?;
    let s = &run.scenario;
    let layout = s.layout();
    let labels = layout.labels();
    let mut cfg = run.explain.clone();
    cfg.seed = seed;
    let sampler = StateSampler::new(layout.clone(), cfg.pressure_norm_range);
    let (background, test) = sampler.background_and_test(&cfg);
    let bg = subsample(background.view(), cfg.background_subsample);
    let saliency = || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let states = sampler.sample(&mut rng, cfg.n_saliency_states);
        saliency_profile(&params, states.view(), &labels)
    };
    match kind {
        ExplainKind::Perturb => {
            let spec = SweepSpec::standard(&s.system, cfg.sweep_points, cfg.level_template)?;
            let rows = perturbation_sweep(&params, &spec, &layout)?;
            write_sweep_csv(&manifest.artifact("perturbation_sweep.csv"), &rows)?;
        }
        ExplainKind::Saliency => {
            write_saliency_csv(&manifest.artifact("saliency.csv"), &saliency()?)?;
        }
        ExplainKind::ShapGlobal => {
            let global = global_attribution(&params, test.view(), bg, &labels)?;
            write_global_csv(&manifest.artifact("shap_global.csv"), &global, Some(&saliency()?))?;
        }
        ExplainKind::ShapPattern => {
            let global = global_attribution(&params, test.view(), bg, &labels)?;
            write_pattern_csv(&manifest.artifact("shap_pattern.csv"), &global)?;
        }
        ExplainKind::ShapCase => {
            let grid = CaseGrid::standard(&s.system, cfg.level_template);
            let cases = case_attribution(&params, &grid, &layout, bg)?;
            write_case_json(&manifest.artifact("shap_case.json"), &cases, &labels)?;
        }
        ExplainKind::ShapTime => {
            let scenario: TimeScenario = excitation.parse()?;
            let steps =
                time_resolved_attribution(&params, scenario, cfg.time_steps, &layout, &s.system, cfg.level_template, bg)?;
            let name = match scenario {
                TimeScenario::DemandSweepConstP => "shap_time_demand.csv",
                TimeScenario::PressureSweepConstD => "shap_time_pressure.csv",
            };
            write_time_csv(&manifest.artifact(name), &steps, &labels)?;
        }
    }
    Ok(())
}
