//! `noslip`: command-line driver for no-slip billiard simulations.
//!
//! Exit codes: 0 on success, 1 for invalid configuration or I/O problems,
//! 2 for numerical failures.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use noslip_core::experiments::{ChannelConfig, GaltonConfig};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::commands::Context;
use crate::config::{
    GridRunConfig, PeriodicConfig, PhaseRunConfig, Seeded, Sidecar, SimulateConfig, SIDECAR_NAME,
};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "noslip",
    version,
    about = "No-slip billiards under a constant force"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config for the command, or a metadata file from an earlier run.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Write SVG figures (default).
    #[arg(long, global = true, overrides_with = "no_svg")]
    svg: bool,
    /// Skip SVG figures.
    #[arg(long, global = true, overrides_with = "svg")]
    no_svg: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Trace one trajectory; writes events.csv and trajectory.svg.
    Simulate,
    /// Build the path-reversing wedge orbit and measure its closure.
    Periodic,
    /// Galton board statistics; writes galton.csv and a histogram.
    Galton,
    /// Collision records of many orbits; writes phase.ndjson and a scatter plot.
    PhasePortrait,
    /// Survival counts over a parameter grid; writes grid.csv.
    StabilityGrid,
    /// Axial extent growth in a channel; writes channel.csv.
    Channel,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Periodic => "periodic",
            Command::Galton => "galton",
            Command::PhasePortrait => "phase-portrait",
            Command::StabilityGrid => "stability-grid",
            Command::Channel => "channel",
        }
    }
}

fn execute<T, F>(cli: &Cli, threads: usize, run: F) -> Result<(), CliError>
where
    T: DeserializeOwned + Serialize + Seeded,
    F: FnOnce(&T, &Context) -> Result<Vec<String>, CliError>,
{
    let name = cli.command.name();
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("`{name}` needs --config PATH")))?;
    let mut cfg: T = config::load(path, name)?;
    let seed = match (cfg.seed_mut(), cli.seed) {
        (Some(s), Some(over)) => {
            *s = over;
            Some(over)
        }
        (Some(s), None) => Some(*s),
        (None, _) => None,
    };
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| CliError::io(format!("creating {}", cli.out.display()), e))?;
    let ctx = Context {
        out: cli.out.clone(),
        svg: !cli.no_svg,
    };
    let start = Instant::now();
    let outputs = run(&cfg, &ctx)?;
    let meta = Sidecar {
        command: name.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: serde_json::to_value(&cfg).map_err(|e| CliError::Config(e.to_string()))?,
        seed,
        threads,
        outputs,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&meta).map_err(|e| CliError::Config(e.to_string()))?;
    let meta_path = cli.out.join(SIDECAR_NAME);
    std::fs::write(&meta_path, text + "\n")
        .map_err(|e| CliError::io(format!("writing {}", meta_path.display()), e))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if cli.threads == Some(0) {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let threads = rayon::current_num_threads();
    match cli.command {
        Command::Simulate => execute::<SimulateConfig, _>(cli, threads, commands::simulate),
        Command::Periodic => execute::<PeriodicConfig, _>(cli, threads, commands::periodic),
        Command::Galton => execute::<GaltonConfig, _>(cli, threads, commands::galton),
        Command::PhasePortrait => {
            execute::<PhaseRunConfig, _>(cli, threads, commands::phase_portrait)
        }
        Command::StabilityGrid => execute::<GridRunConfig, _>(cli, threads, commands::grid),
        Command::Channel => execute::<ChannelConfig, _>(cli, threads, commands::channel),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
