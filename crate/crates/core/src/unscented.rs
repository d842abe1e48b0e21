//! Sigma points, the unscented transform and the range-constrained
//! position estimate built from a single inter-robot range.

use nalgebra::{SMatrix, SVector, Vector1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::types::{position, position_block, CovMat, PosVec, StateVec, STATE_DIM};

/// Minimum separation (m) between the estimate and the anchor for the
/// bearing to be defined.
pub const MIN_BEARING_SEPARATION: f64 = 1e-6;

/// Scaled unscented transform parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UtParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub n: usize,
}

impl UtParams {
    /// `α = 1`, `β = 2`, `κ = 3 − n`.
    pub fn standard(n: usize) -> Self {
        Self {
            alpha: 1.0,
            beta: 2.0,
            kappa: 3.0 - n as f64,
            n,
        }
    }

    /// `λ = α²(n + κ) − n`.
    pub fn lambda(&self) -> f64 {
        let n = self.n as f64;
        self.alpha * self.alpha * (n + self.kappa) - n
    }

    /// `n + λ`, the squared spread of the sigma points.
    pub fn spread(&self) -> f64 {
        self.n as f64 + self.lambda()
    }
}

impl Default for UtParams {
    fn default() -> Self {
        Self::standard(STATE_DIM)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSet<const D: usize> {
    pub points: Vec<SVector<f64, D>>,
    pub w_mean: Vec<f64>,
    pub w_cov: Vec<f64>,
}

/// Mean and covariance weights, `2n + 1` each.
pub fn ut_weights(params: &UtParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let spread = params.spread();
    if spread.abs() < 1e-12 || !spread.is_finite() {
        return Err(Error::DegenerateScaling(spread));
    }
    let lambda = params.lambda();
    let wi = 1.0 / (2.0 * spread);
    let count = 2 * params.n + 1;
    let mut w_mean = vec![wi; count];
    let mut w_cov = vec![wi; count];
    w_mean[0] = lambda / spread;
    w_cov[0] = lambda / spread + (1.0 - params.alpha * params.alpha + params.beta);
    Ok((w_mean, w_cov))
}

/// Points `x`, `x ± (√((n+λ)P))ᵢ` over the columns of the Cholesky factor.
pub fn make_sigma_points<const D: usize>(
    x: &SVector<f64, D>,
    p: &SMatrix<f64, D, D>,
    params: &UtParams,
) -> Result<SigmaSet<D>> {
    if params.n != D {
        return Err(Error::config(
            "ut.n",
            format!("state dimension is {D}, got {}", params.n),
        ));
    }
    let spread = params.spread();
    if !(spread > 0.0) {
        return Err(Error::DegenerateScaling(spread));
    }
    let (w_mean, w_cov) = ut_weights(params)?;
    let l = linalg::cholesky_psd(p)? * spread.sqrt();
    let mut points = vec![*x; 2 * D + 1];
    for i in 0..D {
        let col = l.column(i);
        points[1 + i] = x + col;
        points[1 + D + i] = x - col;
    }
    Ok(SigmaSet {
        points,
        w_mean,
        w_cov,
    })
}

/// Weighted mean and covariance of `f` applied to every sigma point.
pub fn unscented_transform<const D: usize, const M: usize, F>(
    sigma: &SigmaSet<D>,
    f: F,
) -> Result<(SVector<f64, M>, SMatrix<f64, M, M>)>
where
    F: Fn(&SVector<f64, D>) -> SVector<f64, M>,
{
    let ys: Vec<SVector<f64, M>> = sigma.points.iter().map(f).collect();
    if ys.iter().any(|y| y.iter().any(|v| !v.is_finite())) {
        return Err(Error::TransformOverflow);
    }
    let mean = ys
        .iter()
        .zip(&sigma.w_mean)
        .fold(SVector::<f64, M>::zeros(), |acc, (y, w)| acc + y * *w);
    let cov = ys
        .iter()
        .zip(&sigma.w_cov)
        .fold(SMatrix::<f64, M, M>::zeros(), |acc, (y, w)| {
            let d = y - mean;
            acc + d * d.transpose() * *w
        });
    if !mean.iter().chain(cov.iter()).all(|v| v.is_finite()) {
        return Err(Error::TransformOverflow);
    }
    Ok((mean, linalg::symmetrize_unchecked(&cov)))
}

/// Predicted range to the anchor and its variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangePrediction {
    pub d_hat: f64,
    /// Predicted range variance including the sensor variance (m²).
    pub s: f64,
}

/// Unscented prediction of the distance between the estimate's position and
/// `anchor`. Sigma points span the full state; only their position is read.
pub fn predict_range(
    x_motion: &StateVec,
    p_motion: &CovMat,
    anchor: &PosVec,
    sensor_var: f64,
    params: &UtParams,
) -> Result<RangePrediction> {
    if !anchor.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteMatrix);
    }
    if sensor_var < 0.0 || !sensor_var.is_finite() {
        return Err(Error::config("sensor_var", "must be finite and >= 0"));
    }
    let sigma = make_sigma_points(x_motion, p_motion, params)?;
    let (mean, var) = unscented_transform(&sigma, |pt: &StateVec| {
        Vector1::new((position(pt) - anchor).norm())
    })?;
    Ok(RangePrediction {
        d_hat: mean[0],
        s: var[(0, 0)] + sensor_var,
    })
}

/// Moves the motion estimate along the anchor-to-estimate bearing by the
/// range innovation `r − d̂`.
///
/// Position covariance becomes `u S uᵀ + P_pos`; velocity and its covariance
/// are carried over and the position/velocity cross block is zeroed.
pub fn range_constrained_estimate(
    x_motion: &StateVec,
    p_motion: &CovMat,
    anchor: &PosVec,
    r_meas: f64,
    pred: &RangePrediction,
) -> Result<(StateVec, CovMat)> {
    if !(r_meas >= 0.0) || !r_meas.is_finite() {
        return Err(Error::InvalidRange(r_meas));
    }
    let offset = position(x_motion) - anchor;
    let separation = offset.norm();
    if !(separation > MIN_BEARING_SEPARATION) {
        return Err(Error::UndefinedBearing);
    }
    let u = offset / separation;
    let shifted = position(x_motion) + u * (r_meas - pred.d_hat);

    let mut x_range = *x_motion;
    x_range[0] = shifted[0];
    x_range[1] = shifted[1];

    let pos_cov = u * pred.s * u.transpose() + position_block(p_motion);
    let mut p_range = CovMat::zeros();
    p_range.fixed_view_mut::<2, 2>(0, 0).copy_from(&pos_cov);
    p_range
        .fixed_view_mut::<2, 2>(2, 2)
        .copy_from(&p_motion.fixed_view::<2, 2>(2, 2));
    Ok((x_range, linalg::symmetrize(&p_range)?))
}
