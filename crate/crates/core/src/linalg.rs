//! Covariance hygiene: symmetrization, PSD checks and a jittered Cholesky.

use nalgebra::{Cholesky, Const, Matrix2, Matrix4, SMatrix};

use crate::error::{Error, Result};

/// Relative jitter steps tried, in order, when a plain Cholesky fails.
pub const JITTER_LADDER: [f64; 3] = [1e-12, 1e-10, 1e-8];

/// Default relative tolerance for PSD checks (`λ_min ≥ -tol · trace`).
pub const PSD_TOL: f64 = 1e-9;

pub fn is_finite<const D: usize>(m: &SMatrix<f64, D, D>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Returns `(m + mᵀ) / 2`.
pub fn symmetrize<const D: usize>(m: &SMatrix<f64, D, D>) -> Result<SMatrix<f64, D, D>> {
    if !is_finite(m) {
        return Err(Error::NonFiniteMatrix);
    }
    Ok(symmetrize_unchecked(m))
}

pub(crate) fn symmetrize_unchecked<const D: usize>(m: &SMatrix<f64, D, D>) -> SMatrix<f64, D, D> {
    let mut out = *m;
    for i in 0..D {
        for j in (i + 1)..D {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Lower-triangular `L` with `L Lᵀ ≈ m`.
///
/// A failed factorization is retried with `ε · trace(m) / D · I` added for
/// each ε in [`JITTER_LADDER`]. The zero matrix factors to zero.
pub fn cholesky_psd<const D: usize>(m: &SMatrix<f64, D, D>) -> Result<SMatrix<f64, D, D>> {
    let m = symmetrize(m)?;
    if m.iter().all(|&v| v == 0.0) {
        return Ok(SMatrix::zeros());
    }
    if let Some(c) = Cholesky::<f64, Const<D>>::new(m) {
        return Ok(c.unpack());
    }
    let scale = m.trace() / D as f64;
    if scale <= 0.0 {
        return Err(Error::NotPsd);
    }
    for eps in JITTER_LADDER {
        let jittered = m + SMatrix::<f64, D, D>::identity() * (eps * scale);
        if let Some(c) = Cholesky::<f64, Const<D>>::new(jittered) {
            return Ok(c.unpack());
        }
    }
    Err(Error::NotPsd)
}

/// True when all eigenvalues of the symmetric part are `≥ -tol · trace`.
///
/// Tested through a Cholesky of the shifted matrix, which works for any
/// fixed dimension.
pub fn is_psd<const D: usize>(m: &SMatrix<f64, D, D>, tol: f64) -> bool {
    if !is_finite(m) {
        return false;
    }
    let m = symmetrize_unchecked(m);
    let tr = m.trace();
    if tr < 0.0 {
        return false;
    }
    if tr == 0.0 {
        return m.iter().all(|&v| v == 0.0);
    }
    // A strictly positive shift is needed for the factorization to succeed
    // on exactly singular inputs.
    let shift = tol.max(f64::EPSILON) * tr;
    Cholesky::<f64, Const<D>>::new(m + SMatrix::<f64, D, D>::identity() * shift).is_some()
}

pub fn min_eigenvalue4(m: &Matrix4<f64>) -> f64 {
    symmetrize_unchecked(m).symmetric_eigenvalues().min()
}

pub fn min_eigenvalue2(m: &Matrix2<f64>) -> f64 {
    symmetrize_unchecked(m).symmetric_eigenvalues().min()
}

/// Eigenvalues of a symmetric 2x2 matrix, ascending.
pub fn eigenvalues2(m: &Matrix2<f64>) -> (f64, f64) {
    let a = m[(0, 0)];
    let d = m[(1, 1)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let mean = 0.5 * (a + d);
    let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    (mean - r, mean + r)
}
