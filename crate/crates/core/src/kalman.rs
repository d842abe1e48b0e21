//! Constant-velocity Kalman filter with Joseph-form position updates.

use nalgebra::{Matrix2, Matrix2x4, Matrix4x2};

use crate::error::{Error, Result};
use crate::linalg::{self, eigenvalues2};
use crate::types::{CovMat, PosVec, StateVec};

/// Innovation covariances with a condition number at or above this are
/// treated as singular.
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

/// Discrete constant-velocity model with white-noise-acceleration process
/// noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub f: CovMat,
    pub q: CovMat,
    pub dt: f64,
}

impl LinearModel {
    /// `q_psd` is the acceleration noise spectral density in m²/s³.
    pub fn constant_velocity(dt: f64, q_psd: f64) -> Self {
        let mut f = CovMat::identity();
        f[(0, 2)] = dt;
        f[(1, 3)] = dt;
        let (dt2, dt3) = (dt * dt, dt * dt * dt);
        let mut q = CovMat::zeros();
        for axis in 0..2 {
            let (p, v) = (axis, axis + 2);
            q[(p, p)] = q_psd * dt3 / 3.0;
            q[(p, v)] = q_psd * dt2 / 2.0;
            q[(v, p)] = q_psd * dt2 / 2.0;
            q[(v, v)] = q_psd * dt;
        }
        Self { f, q, dt }
    }
}

/// Position-only observation `z = H x + w`, `w ~ N(0, R)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsModel {
    pub h: Matrix2x4<f64>,
    pub r: Matrix2<f64>,
}

impl GpsModel {
    pub fn new(r: Matrix2<f64>) -> Self {
        let mut h = Matrix2x4::zeros();
        h[(0, 0)] = 1.0;
        h[(1, 1)] = 1.0;
        Self { h, r }
    }

    /// Isotropic noise with the given per-axis variance.
    pub fn isotropic(var: f64) -> Self {
        Self::new(Matrix2::identity() * var)
    }
}

pub fn kf_predict(x: &StateVec, p: &CovMat, model: &LinearModel) -> Result<(StateVec, CovMat)> {
    let x_pred = model.f * x;
    let p_pred = linalg::symmetrize(&(model.f * p * model.f.transpose() + model.q))?;
    Ok((x_pred, p_pred))
}

/// Optimal gain `P Hᵀ (H P Hᵀ + R)⁻¹` for the given (total) covariance.
pub fn gain(p: &CovMat, model: &GpsModel) -> Result<Matrix4x2<f64>> {
    let s = linalg::symmetrize(&(model.h * p * model.h.transpose() + model.r))?;
    let (lo, hi) = eigenvalues2(&s);
    if !(lo > 0.0) || hi / lo >= MAX_INNOVATION_CONDITION {
        return Err(Error::DegenerateUpdate);
    }
    let s_inv = s.try_inverse().ok_or(Error::DegenerateUpdate)?;
    Ok(p * model.h.transpose() * s_inv)
}

/// `(I − K H) P (I − K H)ᵀ + K R Kᵀ`, valid for any gain.
pub fn joseph(p: &CovMat, k: &Matrix4x2<f64>, model: &GpsModel) -> Result<CovMat> {
    let a = CovMat::identity() - k * model.h;
    linalg::symmetrize(&(a * p * a.transpose() + k * model.r * k.transpose()))
}

pub fn kf_update(
    x: &StateVec,
    p: &CovMat,
    z: &PosVec,
    model: &GpsModel,
) -> Result<(StateVec, CovMat)> {
    let k = gain(p, model)?;
    let innovation = z - model.h * x;
    let x_post = x + k * innovation;
    let p_post = joseph(p, &k, model)?;
    Ok((x_post, p_post))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue4;
    use crate::types::{position, state};

    #[test]
    fn predict_unit_time_constant_velocity() {
        let m = LinearModel::constant_velocity(1.0, 0.0);
        let (x, _) = kf_predict(&state(0.0, 0.0, 1.0, 2.0), &CovMat::zeros(), &m).unwrap();
        assert_eq!(x, state(1.0, 2.0, 1.0, 2.0));
    }

    #[test]
    fn predict_zero_velocity_is_stationary() {
        for dt in [0.1, 1.0, 7.5] {
            let m = LinearModel::constant_velocity(dt, 0.0);
            let x0 = state(5.0, 5.0, 0.0, 0.0);
            let (x, _) = kf_predict(&x0, &CovMat::zeros(), &m).unwrap();
            assert_eq!(x, x0);
        }
    }

    #[test]
    fn predict_identity_covariance_by_hand() {
        // F I Fᵀ per axis: [[1,1],[0,1]] [[1,0],[1,1]] = [[2,1],[1,1]]
        let m = LinearModel::constant_velocity(1.0, 0.0);
        let (_, p) = kf_predict(&StateVec::zeros(), &CovMat::identity(), &m).unwrap();
        for axis in 0..2 {
            assert_eq!(p[(axis, axis)], 2.0);
            assert_eq!(p[(axis, axis + 2)], 1.0);
            assert_eq!(p[(axis + 2, axis)], 1.0);
            assert_eq!(p[(axis + 2, axis + 2)], 1.0);
        }
        assert_eq!(p[(0, 1)], 0.0);
    }

    #[test]
    fn process_noise_is_psd_and_grows_trace() {
        let m = LinearModel::constant_velocity(1.0, 0.1);
        assert!(min_eigenvalue4(&m.q) >= 0.0);
        let p0 = CovMat::identity();
        let (_, p1) = kf_predict(&StateVec::zeros(), &p0, &m).unwrap();
        assert!(p1.trace() >= p0.trace());
    }

    #[test]
    fn perfect_measurement_snaps_position() {
        let model = GpsModel::isotropic(0.0);
        let (x, _) = kf_update(
            &state(0.0, 0.0, 1.0, 1.0),
            &CovMat::identity(),
            &PosVec::new(3.0, 4.0),
            &model,
        )
        .unwrap();
        assert!((position(&x) - PosVec::new(3.0, 4.0)).norm() < 1e-15);
    }

    #[test]
    fn uninformative_measurement_leaves_state() {
        let model = GpsModel::isotropic(1e12);
        let x0 = state(1.0, 2.0, 3.0, 4.0);
        let (x, _) =
            kf_update(&x0, &CovMat::identity(), &PosVec::new(100.0, -50.0), &model).unwrap();
        assert!((x - x0).norm() < 1e-6);
    }

    #[test]
    fn scalar_analogue_gain_half() {
        let model = GpsModel::isotropic(1.0);
        let k = gain(&CovMat::identity(), &model).unwrap();
        assert!((k[(0, 0)] - 0.5).abs() < 1e-15);
        let (_, p) = kf_update(
            &StateVec::zeros(),
            &CovMat::identity(),
            &PosVec::zeros(),
            &model,
        )
        .unwrap();
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((p[(1, 1)] - 0.5).abs() < 1e-15);
        assert_eq!(p[(2, 2)], 1.0);
    }

    #[test]
    fn singular_innovation_rejected() {
        let model = GpsModel::isotropic(0.0);
        let mut p = CovMat::identity();
        p[(1, 1)] = 0.0;
        let err = kf_update(&StateVec::zeros(), &p, &PosVec::zeros(), &model).unwrap_err();
        assert_eq!(err, Error::DegenerateUpdate);
    }

    fn spd(seed: u64) -> CovMat {
        let mut rng = crate::rng::RngStream::new(seed, 0);
        let a = CovMat::from_fn(|_, _| rng.standard_normal());
        a * a.transpose() + CovMat::identity() * 0.1
    }

    #[test]
    fn joseph_matches_short_form_at_optimal_gain() {
        let model = GpsModel::new(Matrix2::new(2.0, 0.3, 0.3, 1.0));
        for seed in 0..50 {
            let p = spd(seed);
            let k = gain(&p, &model).unwrap();
            let j = joseph(&p, &k, &model).unwrap();
            let short = (CovMat::identity() - k * model.h) * p;
            assert!((j - short).norm() <= 1e-8 * p.norm(), "seed {seed}");
        }
    }

    #[test]
    fn joseph_stays_psd_with_perturbed_gain() {
        let model = GpsModel::isotropic(1.5);
        for seed in 0..50 {
            let p = spd(seed);
            let k = gain(&p, &model).unwrap() + Matrix4x2::from_element(1e-3);
            let j = joseph(&p, &k, &model).unwrap();
            assert_eq!(j, j.transpose());
            assert!(min_eigenvalue4(&j) >= -1e-9 * j.trace(), "seed {seed}");
        }
    }

    #[test]
    fn noiseless_filter_converges_within_ten_epochs() {
        let cv = LinearModel::constant_velocity(1.0, 0.0);
        // floor keeps the innovation covariance invertible
        let gps = GpsModel::isotropic(1e-9);
        let mut truth = state(10.0, 20.0, 1.0, -0.5);
        let mut x = state(14.0, 17.0, 0.0, 0.0);
        let mut p = CovMat::from_diagonal(&nalgebra::Vector4::new(26.0, 26.0, 1.0, 1.0));
        let mut err = f64::INFINITY;
        for _ in 0..10 {
            truth = cv.f * truth;
            (x, p) = kf_predict(&x, &p, &cv).unwrap();
            (x, p) = kf_update(&x, &p, &position(&truth), &gps).unwrap();
            err = (position(&x) - position(&truth)).norm();
        }
        assert!(err < 1e-6, "err {err}");
    }
}
