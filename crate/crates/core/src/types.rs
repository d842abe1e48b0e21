//! Value types shared by every module.
//!
//! States are `[x, y, vx, vy]` in meters and meters/second. Covariances are
//! plain 4x4 matrices; the helpers in [`crate::linalg`] keep them symmetric.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};

use crate::error::{Error, Result};
use crate::linalg;

/// Planar position and velocity `[x, y, vx, vy]`.
pub type StateVec = Vector4<f64>;
/// Covariance of a [`StateVec`].
pub type CovMat = Matrix4<f64>;
/// Planar position `[x, y]`.
pub type PosVec = Vector2<f64>;
/// Covariance of a [`PosVec`].
pub type PosCov = Matrix2<f64>;

pub const STATE_DIM: usize = 4;

pub fn state(x: f64, y: f64, vx: f64, vy: f64) -> StateVec {
    StateVec::new(x, y, vx, vy)
}

pub fn position(s: &StateVec) -> PosVec {
    PosVec::new(s[0], s[1])
}

pub fn velocity(s: &StateVec) -> PosVec {
    PosVec::new(s[2], s[3])
}

/// Upper-left 2x2 position block.
pub fn position_block(p: &CovMat) -> PosCov {
    p.fixed_view::<2, 2>(0, 0).into_owned()
}

pub fn is_finite_state(s: &StateVec) -> bool {
    s.iter().all(|v| v.is_finite())
}

/// A state whose covariance is split into a part correlated with other
/// estimates (`p_dep`) and a part known to be independent (`p_ind`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitEstimate {
    pub state: StateVec,
    pub p_dep: CovMat,
    pub p_ind: CovMat,
}

impl SplitEstimate {
    /// Estimate with no correlated component.
    pub fn independent(state: StateVec, p: CovMat) -> Self {
        Self {
            state,
            p_dep: CovMat::zeros(),
            p_ind: p,
        }
    }

    /// Estimate whose whole covariance is correlated with its source.
    pub fn dependent(state: StateVec, p: CovMat) -> Self {
        Self {
            state,
            p_dep: p,
            p_ind: CovMat::zeros(),
        }
    }

    pub fn total(&self) -> CovMat {
        linalg::symmetrize_unchecked(&(self.p_dep + self.p_ind))
    }

    pub fn position(&self) -> PosVec {
        position(&self.state)
    }

    /// Checks the split invariants at the given relative PSD tolerance.
    pub fn validate(&self, tol: f64) -> Result<()> {
        if !is_finite_state(&self.state) {
            return Err(Error::NonFiniteMatrix);
        }
        for m in [&self.p_dep, &self.p_ind, &self.total()] {
            if !linalg::is_psd(m, tol) {
                return Err(Error::NotPsd);
            }
        }
        Ok(())
    }
}
