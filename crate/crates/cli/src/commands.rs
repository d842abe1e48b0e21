use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::Context;
use coop_loc::montecarlo::{self, Axis, BinSummary, DivergenceRule, RunResult};
use coop_loc::sim;
use coop_loc::Error;
use serde::{Deserialize, Serialize};

use crate::config::ConfigFile;
use crate::exit;

/// A failed command and the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: exit::USAGE,
            error: error.into(),
        }
    }

    pub fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: exit::RUNTIME,
            error: error.into(),
        }
    }
}

/// Config violations are usage errors; everything else is a runtime error.
fn classify(e: Error) -> Failure {
    match e {
        Error::InvalidConfig { .. } => Failure::usage(e),
        _ => Failure::runtime(e),
    }
}

pub struct RunArgs {
    pub config: ConfigFile,
    pub trace_out: PathBuf,
}

pub fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let sc = &args.config.scenario;
    sc.validate().map_err(classify)?;
    let records = sim::run_scenario(sc).map_err(classify)?;
    let file = File::create(&args.trace_out)
        .with_context(|| format!("creating {}", args.trace_out.display()))
        .map_err(Failure::runtime)?;
    sim::write_trace(&records, BufWriter::new(file)).map_err(classify)?;
    let s = sim::summarize_errors(&records, sc.burn_in);
    println!(
        "epochs={} seed={} mean_error_m={:.6} rms_error_m={:.6} max_error_m={:.6} final_error_m={:.6}",
        sc.epochs, sc.seed, s.mean, s.rms, s.max, s.final_error
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub master_seed: u64,
    pub num_runs: usize,
    pub config_hash: String,
    pub code_version: String,
    /// Full configuration the sweep ran with, as TOML.
    pub config: String,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUNS_FILE: &str = "runs.csv";

pub fn summary_file(axis: Axis) -> String {
    format!("{}.csv", axis.name())
}

pub struct SweepArgs {
    pub config: ConfigFile,
    pub workers: usize,
    pub out_dir: PathBuf,
    pub divergence: DivergenceRule,
}

pub fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let sweep = &args.config.sweep;
    sweep.validate().map_err(classify)?;
    if args.workers == 0 {
        return Err(Failure::usage(anyhow::anyhow!("workers: must be >= 1")));
    }
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))
        .map_err(Failure::runtime)?;

    let total = sweep.num_runs;
    let step = (total / 20).max(1);
    eprintln!("sweep: {total} runs on {} workers", args.workers);
    let results = montecarlo::run_batch_with_progress(sweep, args.workers, |done| {
        if done % step == 0 || done == total {
            eprintln!("sweep: {done}/{total}");
        }
    })
    .map_err(classify)?;

    write_runs(&args.out_dir.join(RUNS_FILE), &results).map_err(Failure::runtime)?;
    for axis in Axis::ALL {
        let summaries = montecarlo::bin_and_summarize(
            &results,
            axis,
            &axis.default_binning(sweep),
            args.divergence,
        );
        let path = args.out_dir.join(summary_file(axis));
        let file = File::create(&path)
            .with_context(|| format!("creating {}", path.display()))
            .map_err(Failure::runtime)?;
        montecarlo::export_summary(&summaries, BufWriter::new(file)).map_err(classify)?;
    }
    let manifest = Manifest {
        master_seed: sweep.master_seed,
        num_runs: sweep.num_runs,
        config_hash: args.config.hash(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: args.config.render(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(args.out_dir.join(MANIFEST_FILE), text + "\n")
        .context("writing manifest")
        .map_err(Failure::runtime)?;

    let errors: Vec<f64> = results
        .iter()
        .map(|r| r.mean_error)
        .filter(|e| e.is_finite())
        .collect();
    let m = montecarlo::moments(&errors);
    println!(
        "runs={} failed={} mean_error_m={:.4} std_error_m={:.4} divergence_pct={:.2}",
        results.len(),
        results.iter().filter(|r| r.failure.is_some()).count(),
        m.map_or(f64::NAN, |m| m.mean),
        m.map_or(f64::NAN, |m| m.std),
        montecarlo::overall_divergence_pct(&results),
    );
    Ok(())
}

fn write_runs(path: &Path, results: &[RunResult]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "run_index",
        "seed",
        "path",
        "range_noise_std",
        "gps_noise_std",
        "vel_offset_std",
        "pos_offset",
        "mean_error_m",
        "rms_error_m",
        "max_error_m",
        "diverged",
        "failure",
    ])?;
    for r in results {
        w.write_record([
            r.run_index.to_string(),
            r.seed.to_string(),
            r.path.clone(),
            r.range_noise_std.to_string(),
            r.gps_noise_std.to_string(),
            r.vel_offset_std.to_string(),
            r.pos_offset.to_string(),
            r.mean_error.to_string(),
            r.rms_error.to_string(),
            r.max_error.to_string(),
            r.diverged.to_string(),
            r.failure.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Position of a bin label on its axis: σ multiples for noise axes, meters
/// for offsets. Category labels have none.
pub fn label_value(label: &str) -> Option<f64> {
    match label {
        "0σ" => Some(0.0),
        "1/2σ" => Some(0.5),
        "σ" => Some(1.0),
        "3/2σ" => Some(1.5),
        "2σ" => Some(2.0),
        "5/2σ" => Some(2.5),
        "3σ" => Some(3.0),
        other => other.parse().ok(),
    }
}

pub const REPORT_DIR: &str = "report";

pub fn cmd_report(out_dir: &Path) -> Result<(), Failure> {
    let mut tables = Vec::new();
    for axis in Axis::ALL {
        let path = out_dir.join(summary_file(axis));
        let file = File::open(&path)
            .with_context(|| format!("missing sweep output {}", path.display()))
            .map_err(Failure::usage)?;
        let summaries = montecarlo::parse_summary(file)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(Failure::usage)?;
        tables.push((axis, summaries));
    }
    let report_dir = out_dir.join(REPORT_DIR);
    fs::create_dir_all(&report_dir)
        .context("creating report directory")
        .map_err(Failure::runtime)?;
    for (axis, summaries) in &tables {
        let title = format!("Localization Performance Metrics for {}", axis.title());
        let table_path = report_dir.join(format!("table_{}.txt", axis.name()));
        fs::write(&table_path, montecarlo::render_table(&title, summaries))
            .with_context(|| format!("writing {}", table_path.display()))
            .map_err(Failure::runtime)?;
        let plot_path = report_dir.join(format!("plot_{}.csv", axis.name()));
        write_plot_data(&plot_path, summaries).map_err(Failure::runtime)?;
        println!(
            "table={} plot={}",
            table_path.display(),
            plot_path.display()
        );
    }
    Ok(())
}

fn write_plot_data(path: &Path, summaries: &[BinSummary]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin", "axis_value", "mean_m", "std_m"])?;
    let fmt = |v: Option<f64>| v.map(|v| format!("{v:.2}")).unwrap_or_default();
    for s in summaries {
        w.write_record([
            s.label.clone(),
            label_value(&s.label)
                .map(|v| v.to_string())
                .unwrap_or_default(),
            fmt(s.mean),
            fmt(s.std),
        ])?;
    }
    w.flush()?;
    Ok(())
}
