mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Compressed-air plant simulation, PPO training and policy explainability.
#[derive(Debug, Parser)]
#[command(name = "airctl", version, about)]
pub struct Cli {
    /// Scenario preset (1C1F, 3C1F, 3C3F, 3C5F); overrides the config file.
    #[arg(long, global = true)]
    pub scenario: Option<String>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "runs/latest")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one controller over a demand trace.
    Simulate {
        #[arg(long, value_enum, default_value_t = ControllerKind::Baseline)]
        controller: ControllerKind,
        /// Parameter file for `--controller policy`.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// `synthetic:PATTERN` (DailyWave, StepLoads, Mixed) or a `timestamp,flow_m3s` CSV path.
        #[arg(long)]
        demand: Option<String>,
        /// Length of a synthetic trace, steps.
        #[arg(long, default_value_t = 17_280)]
        steps: usize,
    },
    /// Train a policy with PPO.
    Train {
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Explain a trained policy.
    Explain {
        #[arg(value_enum)]
        kind: ExplainKind,
        #[arg(long)]
        policy: PathBuf,
        /// Excitation for `shap-time`.
        #[arg(long, default_value = "demand")]
        excitation: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ControllerKind {
    Baseline,
    Policy,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExplainKind {
    Perturb,
    Saliency,
    ShapGlobal,
    ShapPattern,
    ShapCase,
    ShapTime,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let config = err.downcast_ref::<airctl::Error>().is_some_and(airctl::Error::is_config);
            ExitCode::from(if config { EXIT_CONFIG } else { EXIT_RUNTIME })
        }
    }
}
