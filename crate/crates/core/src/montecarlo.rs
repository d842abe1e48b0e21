//! Monte Carlo sensitivity sweeps: per-run parameter sampling, a
//! deterministic parallel executor, binning along one sampled parameter and
//! CSV summaries.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{sample_half_normal, RngStream};
use crate::sim::{self, PathShape, PathSpec, ScenarioConfig, ARENA_SIZE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub num_runs: usize,
    pub master_seed: u64,
    /// Template for every run; sampled fields are overwritten. Carried
    /// separately from the sweep parameters in config files.
    #[serde(skip)]
    pub base: ScenarioConfig,
    /// Std of the half-normal range noise sampler, meters.
    pub range_noise_scale: f64,
    /// Std of the half-normal R2 GPS noise sampler, meters.
    pub gps_noise_scale: f64,
    /// Std of the half-normal initial velocity error sampler, m/s.
    pub vel_offset_scale: f64,
    /// Initial position offset is drawn uniformly from `0..=pos_offset_max`.
    pub pos_offset_max: u32,
    /// R2 path templates, one picked uniformly per run.
    pub paths: Vec<PathSpec>,
    /// Randomize path centers and starting phases for both robots.
    pub randomize_start: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let path = |shape| PathSpec {
            shape,
            center: [100.0, 100.0],
            speed: 1.0,
            phase: 0.0,
        };
        Self {
            num_runs: 40_000,
            master_seed: 0,
            base: ScenarioConfig::default(),
            range_noise_scale: 5.0,
            gps_noise_scale: 3.0,
            vel_offset_scale: 1.0,
            pos_offset_max: 10,
            paths: vec![
                path(PathShape::Circle { radius: 50.0 }),
                path(PathShape::Rectangle {
                    width: 50.0,
                    height: 50.0,
                }),
                path(PathShape::Donut {
                    inner_radius: 30.0,
                    outer_radius: 60.0,
                }),
            ],
            randomize_start: true,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_runs == 0 {
            return Err(Error::config("num_runs", "must be > 0"));
        }
        if self.paths.is_empty() {
            return Err(Error::config("paths", "need at least one path"));
        }
        for (name, v) in [
            ("range_noise_scale", self.range_noise_scale),
            ("gps_noise_scale", self.gps_noise_scale),
            ("vel_offset_scale", self.vel_offset_scale),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(name, "must be finite and >= 0"));
            }
        }
        self.base.validate()
    }
}

/// Random center keeping the whole path inside the arena, and a random
/// starting phase.
fn randomize_path(spec: &PathSpec, rng: &mut RngStream) -> PathSpec {
    let (hx, hy) = spec.shape.half_extent();
    let pick = |rng: &mut RngStream, half: f64, fallback: f64| {
        if 2.0 * half < ARENA_SIZE {
            rng.uniform_range(half, ARENA_SIZE - half)
        } else {
            fallback
        }
    };
    let cx = pick(rng, hx, spec.center[0]);
    let cy = pick(rng, hy, spec.center[1]);
    let phase = rng.uniform_range(0.0, spec.shape.perimeter());
    PathSpec {
        center: [cx, cy],
        phase,
        ..*spec
    }
}

/// Scenario for run `run_index`; a pure function of the master seed and the
/// index.
pub fn sample_run(config: &SweepConfig, run_index: usize) -> Result<ScenarioConfig> {
    if run_index >= config.num_runs {
        return Err(Error::config(
            "run_index",
            format!("{run_index} >= num_runs {}", config.num_runs),
        ));
    }
    if config.paths.is_empty() {
        return Err(Error::config("paths", "need at least one path"));
    }
    let mut rng = RngStream::new(config.master_seed, run_index as u64);
    let mut sc = config.base.clone();
    sc.range_noise_std = sample_half_normal(&mut rng, config.range_noise_scale)?;
    sc.gps_noise_std_r2 = sample_half_normal(&mut rng, config.gps_noise_scale)?;
    sc.init_vel_offset_std = sample_half_normal(&mut rng, config.vel_offset_scale)?;
    sc.init_pos_offset = rng.uniform_int(0, config.pos_offset_max) as f64;
    let path_idx = rng.uniform_int(0, config.paths.len() as u32 - 1) as usize;
    sc.r2_path = config.paths[path_idx];
    sc.seed = rng.next_u64();
    if config.randomize_start {
        sc.r2_path = randomize_path(&sc.r2_path, &mut rng);
        sc.r1_path = randomize_path(&sc.r1_path, &mut rng);
    }
    Ok(sc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_index: usize,
    pub seed: u64,
    pub range_noise_std: f64,
    pub gps_noise_std: f64,
    pub vel_offset_std: f64,
    pub pos_offset: f64,
    pub path: String,
    /// Mean position error after burn-in, meters. NaN for failed runs.
    pub mean_error: f64,
    pub rms_error: f64,
    pub max_error: f64,
    /// The run failed or its covariance blew up.
    pub diverged: bool,
    pub failure: Option<String>,
}

/// Total covariance trace beyond which a run counts as diverged, m².
pub const COVARIANCE_BLOWUP_TRACE: f64 = 1e6;

pub fn execute_run(config: &SweepConfig, run_index: usize) -> RunResult {
    let sc = match sample_run(config, run_index) {
        Ok(sc) => sc,
        Err(e) => {
            return RunResult {
                run_index,
                seed: 0,
                range_noise_std: f64::NAN,
                gps_noise_std: f64::NAN,
                vel_offset_std: f64::NAN,
                pos_offset: f64::NAN,
                path: String::new(),
                mean_error: f64::NAN,
                rms_error: f64::NAN,
                max_error: f64::NAN,
                diverged: true,
                failure: Some(e.to_string()),
            }
        }
    };
    let mut result = RunResult {
        run_index,
        seed: sc.seed,
        range_noise_std: sc.range_noise_std,
        gps_noise_std: sc.gps_noise_std_r2,
        vel_offset_std: sc.init_vel_offset_std,
        pos_offset: sc.init_pos_offset,
        path: sc.r2_path.shape.name().to_string(),
        mean_error: f64::NAN,
        rms_error: f64::NAN,
        max_error: f64::NAN,
        diverged: true,
        failure: None,
    };
    match sim::run_scenario(&sc) {
        Ok(records) => {
            let s = sim::summarize_errors(&records, sc.burn_in);
            let blown = records
                .iter()
                .any(|r| !(r.estimate_r2.total().trace() < COVARIANCE_BLOWUP_TRACE));
            result.mean_error = s.mean;
            result.rms_error = s.rms;
            result.max_error = s.max;
            result.diverged = blown || !s.mean.is_finite();
        }
        Err(e) => result.failure = Some(e.to_string()),
    }
    result
}

/// Runs every scenario of the sweep on `workers` threads. Results are in
/// run-index order and independent of the worker count.
pub fn run_batch(config: &SweepConfig, workers: usize) -> Result<Vec<RunResult>> {
    run_batch_with_progress(config, workers, |_| {})
}

/// [`run_batch`] calling `progress` with the number of finished runs.
pub fn run_batch_with_progress<P>(
    config: &SweepConfig,
    workers: usize,
    progress: P,
) -> Result<Vec<RunResult>>
where
    P: Fn(usize) + Sync,
{
    if workers == 0 {
        return Err(Error::config("workers", "must be >= 1"));
    }
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    let done = AtomicUsize::new(0);
    Ok(pool.install(|| {
        (0..config.num_runs)
            .into_par_iter()
            .map(|i| {
                let r = execute_run(config, i);
                progress(done.fetch_add(1, Ordering::Relaxed) + 1);
                r
            })
            .collect()
    }))
}

/// Sampled parameter a batch can be binned along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    RangeNoise,
    GpsNoise,
    PosOffset,
    VelOffset,
    Path,
}

impl Axis {
    pub const ALL: [Axis; 5] = [
        Axis::RangeNoise,
        Axis::GpsNoise,
        Axis::PosOffset,
        Axis::VelOffset,
        Axis::Path,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Axis::RangeNoise => "range-noise",
            Axis::GpsNoise => "gps-noise",
            Axis::PosOffset => "pos-offset",
            Axis::VelOffset => "vel-offset",
            Axis::Path => "path",
        }
    }

    pub fn title(&self) -> &'static str {
        match self {
            Axis::RangeNoise => "Range Noise",
            Axis::GpsNoise => "GPS position solution uncertainty",
            Axis::PosOffset => "Initial Position Offset",
            Axis::VelOffset => "Velocity Offset",
            Axis::Path => "Paths",
        }
    }

    pub fn from_name(name: &str) -> Option<Axis> {
        Axis::ALL.into_iter().find(|a| a.name() == name)
    }

    fn numeric(&self, r: &RunResult) -> f64 {
        match self {
            Axis::RangeNoise => r.range_noise_std,
            Axis::GpsNoise => r.gps_noise_std,
            Axis::PosOffset => r.pos_offset,
            Axis::VelOffset => r.vel_offset_std,
            Axis::Path => f64::NAN,
        }
    }

    /// The binning used by the standard report for this axis.
    pub fn default_binning(&self, config: &SweepConfig) -> Binning {
        match self {
            Axis::RangeNoise => Binning::half_sigma(config.range_noise_scale),
            Axis::GpsNoise => Binning::half_sigma(config.gps_noise_scale),
            Axis::VelOffset => Binning::half_sigma(config.vel_offset_scale),
            Axis::PosOffset => Binning::integers(config.pos_offset_max),
            Axis::Path => {
                Binning::Categories(vec!["circle".into(), "donut".into(), "rectangle".into()])
            }
        }
    }
}

/// How runs are assigned to bins.
#[derive(Debug, Clone, PartialEq)]
pub enum Binning {
    /// Half-open intervals `[edges[i], edges[i+1])`; the last edge may be
    /// infinite.
    Edges {
        edges: Vec<f64>,
        labels: Vec<String>,
    },
    /// Exact matches on the path name.
    Categories(Vec<String>),
}

impl Binning {
    /// Seven bins `[kσ/2, (k+1)σ/2)` for k = 0..6, the last one open-ended,
    /// labeled `0σ … 3σ`.
    pub fn half_sigma(sigma: f64) -> Self {
        let labels = ["0σ", "1/2σ", "σ", "3/2σ", "2σ", "5/2σ", "3σ"];
        let mut edges: Vec<f64> = (0..7).map(|k| k as f64 * sigma / 2.0).collect();
        edges.push(f64::INFINITY);
        Binning::Edges {
            edges,
            labels: labels.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// One bin per integer `0..=max`, the last one open-ended.
    pub fn integers(max: u32) -> Self {
        let mut edges: Vec<f64> = (0..=max).map(f64::from).collect();
        edges.push(f64::INFINITY);
        Binning::Edges {
            edges,
            labels: (0..=max).map(|k| k.to_string()).collect(),
        }
    }

    pub fn labels(&self) -> &[String] {
        match self {
            Binning::Edges { labels, .. } => labels,
            Binning::Categories(c) => c,
        }
    }

    fn index_of(&self, axis: Axis, r: &RunResult) -> Option<usize> {
        match self {
            Binning::Edges { edges, .. } => {
                let v = axis.numeric(r);
                edges.windows(2).position(|w| v >= w[0] && v < w[1])
            }
            Binning::Categories(c) => c.iter().position(|name| *name == r.path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub label: String,
    pub num_runs: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub median: Option<f64>,
    pub max: Option<f64>,
    pub min: Option<f64>,
    pub divergence_pct: Option<f64>,
}

/// Reference for the divergence rule: a run diverges when its error exceeds
/// mean + 3 std of the reference population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceRule {
    /// Mean and std over every run of the batch.
    #[default]
    Global,
    /// Mean and std within each bin.
    PerBin,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation.
pub fn moments(values: &[f64]) -> Option<Moments> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some(Moments { mean, std })
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

fn finite_errors<'a>(results: impl IntoIterator<Item = &'a RunResult>) -> Vec<f64> {
    results
        .into_iter()
        .map(|r| r.mean_error)
        .filter(|e| e.is_finite())
        .collect()
}

fn is_divergent(r: &RunResult, threshold: Option<f64>) -> bool {
    r.diverged || !r.mean_error.is_finite() || threshold.is_some_and(|t| r.mean_error > t)
}

/// Per-bin statistics of run mean errors along `axis`.
pub fn bin_and_summarize(
    results: &[RunResult],
    axis: Axis,
    binning: &Binning,
    rule: DivergenceRule,
) -> Vec<BinSummary> {
    let global_threshold = moments(&finite_errors(results)).map(|m| m.mean + 3.0 * m.std);
    let mut buckets: Vec<Vec<&RunResult>> = vec![Vec::new(); binning.labels().len()];
    for r in results {
        if let Some(i) = binning.index_of(axis, r) {
            buckets[i].push(r);
        }
    }
    binning
        .labels()
        .iter()
        .zip(buckets)
        .map(|(label, runs)| {
            let errors = finite_errors(runs.iter().copied());
            let m = moments(&errors);
            let threshold = match rule {
                DivergenceRule::Global => global_threshold,
                DivergenceRule::PerBin => m.map(|m| m.mean + 3.0 * m.std),
            };
            let divergent = runs.iter().filter(|r| is_divergent(r, threshold)).count();
            BinSummary {
                label: label.clone(),
                num_runs: runs.len(),
                mean: m.map(|m| m.mean),
                std: m.map(|m| m.std),
                median: median(&errors),
                max: errors.iter().copied().reduce(f64::max),
                min: errors.iter().copied().reduce(f64::min),
                divergence_pct: (!runs.is_empty())
                    .then(|| 100.0 * divergent as f64 / runs.len() as f64),
            }
        })
        .collect()
}

/// Percentage of all runs flagged by the global divergence rule.
pub fn overall_divergence_pct(results: &[RunResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    let threshold = moments(&finite_errors(results)).map(|m| m.mean + 3.0 * m.std);
    let n = results
        .iter()
        .filter(|r| is_divergent(r, threshold))
        .count();
    100.0 * n as f64 / results.len() as f64
}

pub const SUMMARY_HEADER: [&str; 8] = [
    "bin",
    "num_runs",
    "mean_m",
    "std_m",
    "median_m",
    "max_m",
    "min_m",
    "divergence_pct",
];

fn fmt2(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.2}")).unwrap_or_default()
}

/// Writes summaries as CSV with two-decimal values; empty bins leave their
/// statistics blank.
pub fn export_summary<W: Write>(summaries: &[BinSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for s in summaries {
        w.write_record([
            s.label.clone(),
            s.num_runs.to_string(),
            fmt2(s.mean),
            fmt2(s.std),
            fmt2(s.median),
            fmt2(s.max),
            fmt2(s.min),
            fmt2(s.divergence_pct),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV written by [`export_summary`].
pub fn parse_summary<R: Read>(input: R) -> Result<Vec<BinSummary>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(SUMMARY_HEADER) {
        return Err(Error::config(
            "summary",
            format!("unexpected header {header:?}"),
        ));
    }
    let opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|_| Error::config("summary", format!("bad number {s:?}")))
        }
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(BinSummary {
            label: rec[0].to_string(),
            num_runs: rec[1]
                .parse()
                .map_err(|_| Error::config("summary", format!("bad count {:?}", &rec[1])))?,
            mean: opt(&rec[2])?,
            std: opt(&rec[3])?,
            median: opt(&rec[4])?,
            max: opt(&rec[5])?,
            min: opt(&rec[6])?,
            divergence_pct: opt(&rec[7])?,
        });
    }
    Ok(out)
}

/// Text table with a `Metric` column followed by one column per bin.
pub fn render_table(title: &str, summaries: &[BinSummary]) -> String {
    type Row = (&'static str, fn(&BinSummary) -> String);
    let rows: [Row; 7] = [
        ("NumRuns", |s| s.num_runs.to_string()),
        ("Mean Error (m)", |s| fmt2(s.mean)),
        ("Std Error (m)", |s| fmt2(s.std)),
        ("Median Error (m)", |s| fmt2(s.median)),
        ("Max Error (m)", |s| fmt2(s.max)),
        ("Min Error (m)", |s| fmt2(s.min)),
        ("Divergence Percentage (%)", |s| fmt2(s.divergence_pct)),
    ];
    let mut cells: Vec<Vec<String>> = Vec::with_capacity(rows.len() + 1);
    cells.push(
        std::iter::once("Metric".to_string())
            .chain(summaries.iter().map(|s| s.label.clone()))
            .collect(),
    );
    for &(name, f) in &rows {
        cells.push(
            std::iter::once(name.to_string())
                .chain(summaries.iter().map(f))
                .collect(),
        );
    }
    let ncols = cells[0].len();
    let widths: Vec<usize> = (0..ncols)
        .map(|c| {
            cells
                .iter()
                .map(|r| r[c].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    for (i, row) in cells.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, v)| {
                let pad = widths[c] - v.chars().count();
                if c == 0 {
                    format!("{v}{}", " ".repeat(pad))
                } else {
                    format!("{}{v}", " ".repeat(pad))
                }
            })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let total: usize = widths.iter().sum::<usize>() + 2 * (ncols - 1);
            let _ = writeln!(out, "{}", "-".repeat(total));
        }
    }
    out
}
