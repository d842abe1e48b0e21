//! Split covariance intersection.
//!
//! Each estimate carries `P = P_d + P_i`, where `P_d` may be correlated with
//! the other estimate in an unknown way and `P_i` is independent of it. The
//! dependent parts are inflated by `1/ω` and `1/(1−ω)` as in covariance
//! intersection; the independent parts are fused as in a Kalman update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kalman::{self, GpsModel};
use crate::linalg;
use crate::types::{position_block, CovMat, PosVec, SplitEstimate, StateVec};

/// Quantity minimized by the weight search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OmegaObjective {
    /// log det of the fused 2x2 position block.
    #[default]
    PositionLogDet,
    /// log det of the full fused 4x4 covariance.
    FullLogDet,
}

/// Bounded search for the intersection weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OmegaSearch {
    pub lower: f64,
    pub upper: f64,
    /// Final bracket width of the golden-section refinement.
    pub tolerance: f64,
    /// Points in the coarse grid that seeds the refinement.
    pub grid_points: usize,
    pub objective: OmegaObjective,
}

pub const OMEGA_CLAMP: f64 = 1e-3;

impl Default for OmegaSearch {
    fn default() -> Self {
        Self {
            lower: OMEGA_CLAMP,
            upper: 1.0 - OMEGA_CLAMP,
            tolerance: 1e-4,
            grid_points: 21,
            objective: OmegaObjective::PositionLogDet,
        }
    }
}

/// How the total covariance is refreshed by a GPS fix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GpsSplitRule {
    /// Joseph update of the prior total covariance and, separately, of the
    /// independent part; the dependent part is their difference.
    #[default]
    TotalPrior,
    /// Joseph update of the independent part written into both the total
    /// and the independent covariance, leaving no dependent part.
    IndependentOnly,
}

fn is_zero(m: &CovMat) -> bool {
    m.iter().all(|&v| v == 0.0)
}

/// `P_d / w + P_i`, with the dependent term dropped when it is exactly zero.
fn inflate(est: &SplitEstimate, w: f64) -> CovMat {
    if is_zero(&est.p_dep) {
        est.p_ind
    } else {
        est.p_dep / w + est.p_ind
    }
}

fn check_weight(a: &SplitEstimate, b: &SplitEstimate, omega: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::InvalidWeight(omega));
    }
    if (omega == 0.0 && !is_zero(&a.p_dep)) || (omega == 1.0 && !is_zero(&b.p_dep)) {
        return Err(Error::InvalidWeight(omega));
    }
    Ok(())
}

/// Inflated covariances and the gain `K = P₁(P₁ + P₂)⁻¹`.
fn inflated_gain(
    a: &SplitEstimate,
    b: &SplitEstimate,
    omega: f64,
) -> Result<(CovMat, CovMat, CovMat)> {
    let p1 = inflate(a, omega);
    let p2 = inflate(b, 1.0 - omega);
    let sum = linalg::symmetrize(&(p1 + p2))?;
    let inv = sum.try_inverse().ok_or(Error::DegenerateFusion)?;
    if !linalg::is_finite(&inv) {
        return Err(Error::DegenerateFusion);
    }
    Ok((p1, p2, p1 * inv))
}

pub fn sci_fuse(a: &SplitEstimate, b: &SplitEstimate, omega: f64) -> Result<SplitEstimate> {
    check_weight(a, b, omega)?;
    let (p1, _, k) = inflated_gain(a, b, omega)?;
    let i_k = CovMat::identity() - k;
    let state = a.state + k * (b.state - a.state);
    let p = linalg::symmetrize(&(i_k * p1))?;
    let p_ind =
        linalg::symmetrize(&(i_k * a.p_ind * i_k.transpose() + k * b.p_ind * k.transpose()))?;
    let p_dep = linalg::symmetrize(&(p - p_ind))?;
    Ok(SplitEstimate {
        state,
        p_dep,
        p_ind,
    })
}

/// Fused covariance for a given weight, without forming the state.
pub fn fused_covariance(a: &SplitEstimate, b: &SplitEstimate, omega: f64) -> Result<CovMat> {
    let (p1, _, k) = inflated_gain(a, b, omega)?;
    linalg::symmetrize(&((CovMat::identity() - k) * p1))
}

/// Objective value at `omega`; `+∞` where fusion is undefined.
pub fn omega_objective(
    a: &SplitEstimate,
    b: &SplitEstimate,
    omega: f64,
    objective: OmegaObjective,
) -> f64 {
    let Ok(p) = fused_covariance(a, b, omega) else {
        return f64::INFINITY;
    };
    let det = match objective {
        OmegaObjective::PositionLogDet => position_block(&p).determinant(),
        OmegaObjective::FullLogDet => p.determinant(),
    };
    if det > 0.0 {
        det.ln()
    } else {
        f64::INFINITY
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Weight minimizing the fused determinant over `[search.lower, search.upper]`.
///
/// A coarse grid picks the best cell, which is then refined by golden-section
/// search down to `search.tolerance`.
pub fn optimize_omega(a: &SplitEstimate, b: &SplitEstimate, search: &OmegaSearch) -> f64 {
    let f = |w: f64| omega_objective(a, b, w, search.objective);
    let n = search.grid_points.max(2);
    let step = (search.upper - search.lower) / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|i| search.lower + step * i as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&w| f(w)).collect();
    let best = values
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v < values[best] { i } else { best });

    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(n - 1)];
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > search.tolerance {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    let refined = 0.5 * (lo + hi);
    // The refinement can only drift within one grid cell; keep the grid
    // point if it is still better (flat or boundary minima).
    if f(refined) <= values[best] {
        refined
    } else {
        grid[best]
    }
}

/// Fuses with the default weight search.
pub fn fuse(a: &SplitEstimate, b: &SplitEstimate) -> Result<SplitEstimate> {
    fuse_with(a, b, &OmegaSearch::default()).map(|(est, _)| est)
}

/// Fuses with an explicit weight search, returning the chosen weight too.
pub fn fuse_with(
    a: &SplitEstimate,
    b: &SplitEstimate,
    search: &OmegaSearch,
) -> Result<(SplitEstimate, f64)> {
    let omega = optimize_omega(a, b, search);
    Ok((sci_fuse(a, b, omega)?, omega))
}

/// Information-form split fusion:
/// `P⁻¹ = P₁⁻¹ + P₂⁻¹`, `x = P(P₁⁻¹x₁ + P₂⁻¹x₂)`,
/// `P_i = P(P₁⁻¹P₁ᵢP₁⁻¹ + P₂⁻¹P₂ᵢP₂⁻¹)P`.
///
/// Algebraically equal to [`sci_fuse`] for invertible inflated covariances.
pub fn sci_fuse_information(
    a: &SplitEstimate,
    b: &SplitEstimate,
    omega: f64,
) -> Result<SplitEstimate> {
    check_weight(a, b, omega)?;
    let p1 = inflate(a, omega);
    let p2 = inflate(b, 1.0 - omega);
    let p1_inv = p1.try_inverse().ok_or(Error::DegenerateFusion)?;
    let p2_inv = p2.try_inverse().ok_or(Error::DegenerateFusion)?;
    let p = linalg::symmetrize(&(p1_inv + p2_inv))?
        .try_inverse()
        .ok_or(Error::DegenerateFusion)?;
    let p = linalg::symmetrize(&p)?;
    let state: StateVec = p * (p1_inv * a.state + p2_inv * b.state);
    let p_ind =
        linalg::symmetrize(&(p * (p1_inv * a.p_ind * p1_inv + p2_inv * b.p_ind * p2_inv) * p))?;
    let p_dep = linalg::symmetrize(&(p - p_ind))?;
    Ok(SplitEstimate {
        state,
        p_dep,
        p_ind,
    })
}

/// Position fix applied to a split estimate. The gain always comes from the
/// total prior covariance.
pub fn gps_split_update(
    est: &SplitEstimate,
    z: &PosVec,
    model: &GpsModel,
    rule: GpsSplitRule,
) -> Result<SplitEstimate> {
    let total = est.total();
    let k = kalman::gain(&total, model)?;
    let state = est.state + k * (z - model.h * est.state);
    let p_ind = kalman::joseph(&est.p_ind, &k, model)?;
    let p_total = match rule {
        GpsSplitRule::TotalPrior => kalman::joseph(&total, &k, model)?,
        GpsSplitRule::IndependentOnly => p_ind,
    };
    let p_dep = linalg::symmetrize(&(p_total - p_ind))?;
    Ok(SplitEstimate {
        state,
        p_dep,
        p_ind,
    })
}
