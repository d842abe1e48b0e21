//! Two-robot planar world: truth paths, synthetic measurements and the
//! per-epoch estimation loop for R2.
//!
//! Each epoch runs, in order: R1 predict and (scheduled) GPS update; R2
//! constant-velocity predict on its split covariance; then either an R2 GPS
//! fix when one arrives or, failing that, a range-constrained estimate fused
//! by split covariance intersection.

use std::f64::consts::TAU;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kalman::{self, GpsModel, LinearModel};
use crate::linalg;
use crate::rng::{sample_gaussian, RngStream};
use crate::sci::{self, GpsSplitRule, OmegaSearch};
use crate::types::{position, position_block, CovMat, PosVec, SplitEstimate, StateVec};
use crate::unscented::{self, UtParams, MIN_BEARING_SEPARATION};

/// Side of the square arena, meters. Positions live in `[0, ARENA_SIZE]²`.
pub const ARENA_SIZE: f64 = 200.0;

const STREAM_INIT: u64 = 0;
const STREAM_RANGE: u64 = 1;
const STREAM_GPS_R1: u64 = 2;
const STREAM_GPS_R2: u64 = 3;
const STREAM_DROPOUT: u64 = 4;

/// Closed loop geometry, relative to the path center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathShape {
    Circle {
        radius: f64,
    },
    Rectangle {
        width: f64,
        height: f64,
    },
    /// Outer lap, radial transfer inward, inner lap, radial transfer out.
    Donut {
        inner_radius: f64,
        outer_radius: f64,
    },
}

impl PathShape {
    pub fn name(&self) -> &'static str {
        match self {
            PathShape::Circle { .. } => "circle",
            PathShape::Rectangle { .. } => "rectangle",
            PathShape::Donut { .. } => "donut",
        }
    }

    pub fn perimeter(&self) -> f64 {
        match *self {
            PathShape::Circle { radius } => TAU * radius,
            PathShape::Rectangle { width, height } => 2.0 * (width + height),
            PathShape::Donut {
                inner_radius,
                outer_radius,
            } => TAU * (inner_radius + outer_radius) + 2.0 * (outer_radius - inner_radius),
        }
    }

    /// Half widths of the axis-aligned bounding box.
    pub fn half_extent(&self) -> (f64, f64) {
        match *self {
            PathShape::Circle { radius } => (radius, radius),
            PathShape::Rectangle { width, height } => (width / 2.0, height / 2.0),
            PathShape::Donut { outer_radius, .. } => (outer_radius, outer_radius),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            PathShape::Circle { radius } => radius > 0.0 && radius.is_finite(),
            PathShape::Rectangle { width, height } => {
                width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()
            }
            PathShape::Donut {
                inner_radius,
                outer_radius,
            } => inner_radius > 0.0 && outer_radius > inner_radius && outer_radius.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(
                "path.shape",
                format!("invalid geometry {self:?}"),
            ))
        }
    }

    /// Offset from the center after traveling `arc` meters from the start.
    pub fn point_at(&self, arc: f64) -> PosVec {
        let s = arc.rem_euclid(self.perimeter());
        match *self {
            PathShape::Circle { radius } => {
                let a = s / radius;
                PosVec::new(radius * a.cos(), radius * a.sin())
            }
            PathShape::Rectangle { width, height } => {
                let (hx, hy) = (width / 2.0, height / 2.0);
                if s < width {
                    PosVec::new(-hx + s, -hy)
                } else if s < width + height {
                    PosVec::new(hx, -hy + (s - width))
                } else if s < 2.0 * width + height {
                    PosVec::new(hx - (s - width - height), hy)
                } else {
                    PosVec::new(-hx, hy - (s - 2.0 * width - height))
                }
            }
            PathShape::Donut {
                inner_radius,
                outer_radius,
            } => {
                let outer_lap = TAU * outer_radius;
                let transfer = outer_radius - inner_radius;
                let inner_lap = TAU * inner_radius;
                let (radius, angle) = if s < outer_lap {
                    (outer_radius, s / outer_radius)
                } else if s < outer_lap + transfer {
                    (outer_radius - (s - outer_lap), 0.0)
                } else if s < outer_lap + transfer + inner_lap {
                    (inner_radius, (s - outer_lap - transfer) / inner_radius)
                } else {
                    (inner_radius + (s - outer_lap - transfer - inner_lap), 0.0)
                };
                PosVec::new(radius * angle.cos(), radius * angle.sin())
            }
        }
    }
}

/// A closed path traversed at constant speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    pub shape: PathShape,
    pub center: [f64; 2],
    /// m/s along the path.
    pub speed: f64,
    /// Starting arc-length offset along the loop, meters.
    pub phase: f64,
}

impl PathSpec {
    pub fn center(&self) -> PosVec {
        PosVec::new(self.center[0], self.center[1])
    }

    /// Time for one full lap, seconds.
    pub fn period(&self) -> f64 {
        self.shape.perimeter() / self.speed
    }

    pub fn position_at(&self, t: f64) -> PosVec {
        self.center() + self.shape.point_at(self.phase + self.speed * t)
    }
}

/// `epochs + 1` truth states. Velocity at each sample is the forward
/// difference to the next sample, so consecutive truth states obey the
/// constant-velocity model exactly.
pub fn gen_path(spec: &PathSpec, epochs: usize, dt: f64) -> Result<Vec<StateVec>> {
    spec.shape.validate()?;
    if !(spec.speed >= 0.0) || !spec.speed.is_finite() {
        return Err(Error::config("path.speed", "must be finite and >= 0"));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::config("dt", "must be finite and > 0"));
    }
    let positions: Vec<PosVec> = (0..=epochs + 1)
        .map(|k| spec.position_at(k as f64 * dt))
        .collect();
    let inside = |p: &PosVec| p.iter().all(|c| (0.0..=ARENA_SIZE).contains(c));
    if !positions.iter().all(inside) {
        return Err(Error::PathOutOfBounds);
    }
    Ok(positions
        .windows(2)
        .map(|w| {
            let v = (w[1] - w[0]) / dt;
            StateVec::new(w[0][0], w[0][1], v[0], v[1])
        })
        .collect())
}

/// True distance plus Gaussian noise, clamped at zero.
pub fn synth_range(p1: &PosVec, p2: &PosVec, noise_std: f64, rng: &mut RngStream) -> Result<f64> {
    let d = (p1 - p2).norm();
    Ok(sample_gaussian(rng, d, noise_std)?.max(0.0))
}

/// True position plus isotropic Gaussian noise.
pub fn synth_gps(truth: &StateVec, noise_std: f64, rng: &mut RngStream) -> Result<PosVec> {
    Ok(PosVec::new(
        sample_gaussian(rng, truth[0], noise_std)?,
        sample_gaussian(rng, truth[1], noise_std)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub epochs: usize,
    pub dt: f64,
    pub r1_path: PathSpec,
    pub r2_path: PathSpec,
    pub range_noise_std: f64,
    pub gps_noise_std_r1: f64,
    pub gps_noise_std_r2: f64,
    /// Epochs between R1 fixes; 0 disables R1 GPS.
    pub gps_period_r1: usize,
    /// Epochs between scheduled R2 fixes; 0 disables R2 GPS.
    pub gps_period_r2: usize,
    /// Probability that a scheduled R2 fix is lost.
    pub gps_dropout_r2: f64,
    pub range_updates: bool,
    /// Magnitude of the initial R2 position error, meters.
    pub init_pos_offset: f64,
    /// Per-axis std of the initial R2 velocity error, m/s.
    pub init_vel_offset_std: f64,
    /// White-noise-acceleration spectral density, m²/s³.
    pub process_noise_psd: f64,
    /// Floor applied to every measurement variance the filters assume, m².
    pub min_sensor_var: f64,
    /// Leading epochs excluded from run error statistics.
    pub burn_in: usize,
    pub ut: UtParams,
    pub omega: OmegaSearch,
    pub gps_split_rule: GpsSplitRule,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            epochs: 400,
            dt: 1.0,
            r1_path: PathSpec {
                shape: PathShape::Rectangle {
                    width: 120.0,
                    height: 80.0,
                },
                center: [100.0, 100.0],
                speed: 1.0,
                phase: 0.0,
            },
            r2_path: PathSpec {
                shape: PathShape::Circle { radius: 50.0 },
                center: [100.0, 100.0],
                speed: 1.0,
                phase: 0.0,
            },
            range_noise_std: 5.0,
            gps_noise_std_r1: 0.5,
            gps_noise_std_r2: 3.0,
            gps_period_r1: 1,
            gps_period_r2: 4,
            gps_dropout_r2: 0.5,
            range_updates: true,
            init_pos_offset: 5.0,
            init_vel_offset_std: 1.0,
            process_noise_psd: 0.01,
            min_sensor_var: 1e-6,
            burn_in: 20,
            ut: UtParams::default(),
            omega: OmegaSearch::default(),
            gps_split_rule: GpsSplitRule::TotalPrior,
            seed: 0,
        }
    }
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(
            field,
            format!("must be finite and >= 0, got {v}"),
        ))
    }
}

impl ScenarioConfig {
    /// Every noise source zeroed, both robots fixed every epoch, and a
    /// variance floor tight enough that exact fixes are trusted.
    pub fn noiseless(seed: u64) -> Self {
        Self {
            range_noise_std: 0.0,
            gps_noise_std_r1: 0.0,
            gps_noise_std_r2: 0.0,
            gps_period_r2: 1,
            gps_dropout_r2: 0.0,
            init_pos_offset: 0.0,
            init_vel_offset_std: 0.0,
            min_sensor_var: 1e-12,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be > 0"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::config("dt", "must be finite and > 0"));
        }
        non_negative("range_noise_std", self.range_noise_std)?;
        non_negative("gps_noise_std_r1", self.gps_noise_std_r1)?;
        non_negative("gps_noise_std_r2", self.gps_noise_std_r2)?;
        non_negative("init_pos_offset", self.init_pos_offset)?;
        non_negative("init_vel_offset_std", self.init_vel_offset_std)?;
        non_negative("process_noise_psd", self.process_noise_psd)?;
        non_negative("min_sensor_var", self.min_sensor_var)?;
        if !(0.0..=1.0).contains(&self.gps_dropout_r2) {
            return Err(Error::config("gps_dropout_r2", "must lie in [0, 1]"));
        }
        if self.burn_in >= self.epochs {
            return Err(Error::config("burn_in", "must be < epochs"));
        }
        if self.ut.n != crate::types::STATE_DIM {
            return Err(Error::config("ut.n", "must equal the state dimension 4"));
        }
        if !(self.ut.spread() > 0.0) {
            return Err(Error::config("ut", "n + lambda must be > 0"));
        }
        let o = &self.omega;
        if !(0.0 <= o.lower && o.lower < o.upper && o.upper <= 1.0) {
            return Err(Error::config("omega", "need 0 <= lower < upper <= 1"));
        }
        if !(o.tolerance > 0.0) || o.grid_points < 2 {
            return Err(Error::config(
                "omega",
                "need tolerance > 0 and grid_points >= 2",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub truth_r1: StateVec,
    pub truth_r2: StateVec,
    pub estimate_r1: StateVec,
    pub estimate_r2: SplitEstimate,
    /// Euclidean distance between true and estimated R2 position.
    pub error: f64,
    pub gps_r1_applied: bool,
    pub gps_r2_applied: bool,
    pub range_applied: bool,
    /// Intersection weight chosen when a range update was fused.
    pub omega: Option<f64>,
}

impl EpochRecord {
    /// Normalized estimation error squared of the R2 position.
    pub fn position_nees(&self) -> f64 {
        let e = position(&self.estimate_r2.state) - position(&self.truth_r2);
        match position_block(&self.estimate_r2.total()).try_inverse() {
            Some(inv) => (e.transpose() * inv * e)[(0, 0)],
            None => f64::INFINITY,
        }
    }
}

/// Runs one scenario; deterministic in `config`.
pub fn run_scenario(config: &ScenarioConfig) -> Result<Vec<EpochRecord>> {
    config.validate()?;
    let truth_r1 = gen_path(&config.r1_path, config.epochs, config.dt)?;
    let truth_r2 = gen_path(&config.r2_path, config.epochs, config.dt)?;

    let mut init_rng = RngStream::new(config.seed, STREAM_INIT);
    let mut range_rng = RngStream::new(config.seed, STREAM_RANGE);
    let mut gps1_rng = RngStream::new(config.seed, STREAM_GPS_R1);
    let mut gps2_rng = RngStream::new(config.seed, STREAM_GPS_R2);
    let mut dropout_rng = RngStream::new(config.seed, STREAM_DROPOUT);

    let cv = LinearModel::constant_velocity(config.dt, config.process_noise_psd);
    let floor = config.min_sensor_var;
    let gps_r1 = GpsModel::isotropic(config.gps_noise_std_r1.powi(2).max(floor));
    let gps_r2 = GpsModel::isotropic(config.gps_noise_std_r2.powi(2).max(floor));
    let range_var = config.range_noise_std.powi(2).max(floor);

    let mut x1 = truth_r1[0];
    let mut p1 = CovMat::identity();

    let heading = init_rng.uniform_range(0.0, std::f64::consts::TAU);
    let off = config.init_pos_offset;
    let mut x2 = truth_r2[0];
    x2[0] += off * heading.cos();
    x2[1] += off * heading.sin();
    x2[2] += sample_gaussian(&mut init_rng, 0.0, config.init_vel_offset_std)?;
    x2[3] += sample_gaussian(&mut init_rng, 0.0, config.init_vel_offset_std)?;
    let var0 = off * off + 1.0;
    let mut est = SplitEstimate::independent(
        x2,
        CovMat::from_diagonal(&nalgebra::Vector4::new(var0, var0, 1.0, 1.0)),
    );

    let mut records = Vec::with_capacity(config.epochs);
    for k in 1..=config.epochs {
        let (t1, t2) = (truth_r1[k], truth_r2[k]);

        // Draw every noise sample each epoch so streams stay aligned
        // regardless of which updates fire.
        let z1 = synth_gps(&t1, config.gps_noise_std_r1, &mut gps1_rng)?;
        let z2 = synth_gps(&t2, config.gps_noise_std_r2, &mut gps2_rng)?;
        let r = synth_range(
            &position(&t1),
            &position(&t2),
            config.range_noise_std,
            &mut range_rng,
        )?;
        let dropped = dropout_rng.bernoulli(config.gps_dropout_r2);

        (x1, p1) = kalman::kf_predict(&x1, &p1, &cv)?;
        let gps_r1_applied = config.gps_period_r1 > 0 && k % config.gps_period_r1 == 0;
        if gps_r1_applied {
            (x1, p1) = kalman::kf_update(&x1, &p1, &z1, &gps_r1)?;
        }

        est = predict_split(&est, &cv)?;

        let gps_r2_applied = config.gps_period_r2 > 0 && k % config.gps_period_r2 == 0 && !dropped;
        let mut range_applied = false;
        let mut omega = None;
        if gps_r2_applied {
            est = sci::gps_split_update(&est, &z2, &gps_r2, config.gps_split_rule)?;
        } else if config.range_updates {
            let anchor = position(&x1);
            if (est.position() - anchor).norm() > MIN_BEARING_SEPARATION {
                let p_motion = est.total();
                let pred = unscented::predict_range(
                    &est.state, &p_motion, &anchor, range_var, &config.ut,
                )?;
                let (x_range, p_range) = unscented::range_constrained_estimate(
                    &est.state, &p_motion, &anchor, r, &pred,
                )?;
                let (fused, w) = sci::fuse_with(
                    &est,
                    &SplitEstimate::dependent(x_range, p_range),
                    &config.omega,
                )?;
                est = fused;
                omega = Some(w);
                range_applied = true;
            }
        }

        records.push(EpochRecord {
            epoch: k,
            truth_r1: t1,
            truth_r2: t2,
            estimate_r1: x1,
            estimate_r2: est,
            error: (est.position() - position(&t2)).norm(),
            gps_r1_applied,
            gps_r2_applied,
            range_applied,
            omega,
        });
    }
    Ok(records)
}

/// Constant-velocity predict of a split estimate. Process noise is fresh and
/// therefore lands in the independent part only.
pub fn predict_split(est: &SplitEstimate, model: &LinearModel) -> Result<SplitEstimate> {
    let f = model.f;
    Ok(SplitEstimate {
        state: f * est.state,
        p_dep: linalg::symmetrize(&(f * est.p_dep * f.transpose()))?,
        p_ind: linalg::symmetrize(&(f * est.p_ind * f.transpose() + model.q))?,
    })
}

/// Summary statistics of one run's position errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub mean: f64,
    pub rms: f64,
    pub max: f64,
    pub final_error: f64,
}

/// Error statistics over the epochs after `burn_in`.
pub fn summarize_errors(records: &[EpochRecord], burn_in: usize) -> ErrorSummary {
    let kept: Vec<f64> = records
        .iter()
        .filter(|r| r.epoch > burn_in)
        .map(|r| r.error)
        .collect();
    let n = kept.len().max(1) as f64;
    ErrorSummary {
        mean: kept.iter().sum::<f64>() / n,
        rms: (kept.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
        max: kept.iter().copied().fold(0.0, f64::max),
        final_error: records.last().map_or(0.0, |r| r.error),
    }
}

pub const TRACE_HEADER: [&str; 16] = [
    "epoch",
    "r1_true_x",
    "r1_true_y",
    "r2_true_x",
    "r2_true_y",
    "r1_est_x",
    "r1_est_y",
    "r2_est_x",
    "r2_est_y",
    "error_m",
    "p_xx",
    "p_xy",
    "p_yy",
    "gps_r1",
    "gps_r2",
    "range",
];

/// Per-epoch trace as CSV, one row per record.
pub fn write_trace<W: Write>(records: &[EpochRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in records {
        let p = position_block(&r.estimate_r2.total());
        let flag = |b: bool| if b { "1".to_string() } else { "0".to_string() };
        w.write_record([
            r.epoch.to_string(),
            r.truth_r1[0].to_string(),
            r.truth_r1[1].to_string(),
            r.truth_r2[0].to_string(),
            r.truth_r2[1].to_string(),
            r.estimate_r1[0].to_string(),
            r.estimate_r1[1].to_string(),
            r.estimate_r2.state[0].to_string(),
            r.estimate_r2.state[1].to_string(),
            r.error.to_string(),
            p[(0, 0)].to_string(),
            p[(0, 1)].to_string(),
            p[(1, 1)].to_string(),
            flag(r.gps_r1_applied),
            flag(r.gps_r2_applied),
            flag(r.range_applied),
        ])?;
    }
    w.flush()?;
    Ok(())
}
