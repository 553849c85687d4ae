//! `starklock`: runs the bundled simulation scenarios and writes plot data.

mod manifest;
mod scenarios;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use starklock_core::config::{Config, CONFIG_ENV_VAR};

use scenarios::Scenario;

#[derive(Debug, Parser)]
#[command(name = "starklock", version, about = "NV-center Stark tuning and spectral-lock simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Config document; falls back to the environment variable, then the shipped defaults.
    #[arg(long, env = CONFIG_ENV_VAR)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one named scenario.
    Run {
        #[arg(long, value_enum)]
        scenario: Scenario,
        #[command(flatten)]
        common: Common,
        /// Overrides `feedback.enabled` for lock runs.
        #[arg(long, value_enum)]
        feedback: Option<Switch>,
        /// Lock-run duration in seconds; defaults to `scenarios.lock_duration`.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Locked (or free-running) PLE experiment; shorthand for `run --scenario lock-run`.
    SimulateLock {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, value_enum, default_value = "on")]
        feedback: Switch,
    },
    /// List the available scenarios.
    Scenarios,
}

fn load_config(path: Option<&PathBuf>) -> anyhow::Result<Config> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            Config::from_json_str(&text).with_context(|| format!("invalid config {}", p.display()))
        }
        None => Ok(Config::shipped()),
    }
}

fn run(scenario: Scenario, common: &Common, feedback: Option<Switch>, duration: Option<f64>) -> anyhow::Result<()> {
    let mut cfg = load_config(common.config.as_ref())?;
    if let Some(f) = feedback {
        cfg.feedback.enabled = f == Switch::On;
    }
    if let Some(d) = duration {
        anyhow::ensure!(d.is_finite() && d > 0.0, "--duration must be a positive number of seconds");
        cfg.scenarios.lock_duration = d;
    }
    std::fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    let files = scenarios::run(scenario, &cfg, common.seed, &common.out)?;
    let m = manifest::Manifest::build(scenario.name(), &cfg, common.seed, &common.out, &files)?;
    m.write(&common.out.join("manifest.json"))?;
    println!("{}: wrote {} files to {}", scenario.name(), files.len() + 1, common.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, common, feedback, duration } => run(*scenario, common, *feedback, *duration),
        Command::SimulateLock { common, duration, feedback } => run(Scenario::LockRun, common, Some(*feedback), *duration),
        Command::Scenarios => {
            for s in Scenario::value_variants() {
                println!("{:<14} {}", s.name(), s.describe());
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
