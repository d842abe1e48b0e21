use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coop_loc::montecarlo::DivergenceRule;
use coop_loc_cli::commands::{self, Failure, RunArgs, SweepArgs};
use coop_loc_cli::config::{extract_overrides, ConfigFile};
use coop_loc_cli::exit;

/// Range-only cooperative localization simulator.
///
/// Any `--section.key=value` argument overrides that key of the loaded
/// configuration, e.g. `--scenario.gps_period_r2=10`.
#[derive(Parser)]
#[command(name = "coop-loc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its per-epoch trace.
    Run {
        /// Config file path or preset name (nominal, noiseless).
        #[arg(long)]
        config: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value = "trace.csv")]
        trace_out: PathBuf,
    },
    /// Run a Monte Carlo sweep and write per-axis summaries.
    Sweep {
        #[arg(long)]
        config: Option<String>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long, env = "COOP_LOC_WORKERS")]
        workers: Option<usize>,
        #[arg(long, default_value = "sweep_out")]
        out_dir: PathBuf,
        /// Apply the 3σ divergence rule within each bin instead of globally.
        #[arg(long)]
        per_bin_divergence: bool,
    },
    /// Render text tables and plot data from a sweep directory.
    Report {
        #[arg(long, default_value = "sweep_out")]
        out_dir: PathBuf,
    },
}

fn load(
    config: Option<&str>,
    mut overrides: Vec<(String, String)>,
    extra: &[(&str, Option<String>)],
) -> Result<ConfigFile, Failure> {
    for (key, value) in extra {
        if let Some(v) = value {
            overrides.push((key.to_string(), v.clone()));
        }
    }
    ConfigFile::load(config, &overrides).map_err(Failure::usage)
}

fn dispatch(cli: Cli, overrides: Vec<(String, String)>) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            seed,
            epochs,
            trace_out,
        } => {
            let config = load(
                config.as_deref(),
                overrides,
                &[
                    ("scenario.seed", seed.map(|s| s.to_string())),
                    ("scenario.epochs", epochs.map(|e| e.to_string())),
                ],
            )?;
            commands::cmd_run(RunArgs { config, trace_out })
        }
        Command::Sweep {
            config,
            runs,
            seed,
            epochs,
            workers,
            out_dir,
            per_bin_divergence,
        } => {
            let config = load(
                config.as_deref(),
                overrides,
                &[
                    ("sweep.num_runs", runs.map(|r| r.to_string())),
                    ("sweep.master_seed", seed.map(|s| s.to_string())),
                    ("scenario.epochs", epochs.map(|e| e.to_string())),
                ],
            )?;
            let workers = workers
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            commands::cmd_sweep(SweepArgs {
                config,
                workers,
                out_dir,
                divergence: if per_bin_divergence {
                    DivergenceRule::PerBin
                } else {
                    DivergenceRule::Global
                },
            })
        }
        Command::Report { out_dir } => commands::cmd_report(&out_dir),
    }
}

fn main() -> ExitCode {
    let (args, overrides) = extract_overrides(std::env::args().collect());
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE as u8 } else { 0 });
        }
    };
    match dispatch(cli, overrides) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code as u8)
        }
    }
}
