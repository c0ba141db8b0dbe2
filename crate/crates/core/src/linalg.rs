//! Small dense linear-algebra helpers shared by the Gaussian message rules.
//!
//! Every covariance or precision emitted by the library goes through
//! [`floor_spd`]: the matrix is symmetrized and any eigenvalue below
//! `1e-10 * max(1, trace / d)` is raised to that level.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const FLOOR_REL: f64 = 1e-10;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalue floor used for matrix `m` (already symmetric).
pub fn floor_level(m: &DMatrix<f64>) -> f64 {
    let d = m.nrows().max(1) as f64;
    FLOOR_REL * (m.trace() / d).max(1.0)
}

/// Symmetrizes `m` and clamps its spectrum from below. The flag reports
/// whether any eigenvalue had to be raised.
pub fn floor_spd(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance/precision matrix"));
    }
    let s = symmetrize(m);
    let n = s.nrows();
    if n == 0 {
        return Ok((s, false));
    }
    let eps = floor_level(&s);
    // Fast path: s - eps*I positive definite means nothing to clamp.
    let shifted = &s - DMatrix::<f64>::identity(n, n) * eps;
    if shifted.cholesky().is_some() {
        return Ok((s, false));
    }
    let eig = s.symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| v.max(eps));
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    Ok((symmetrize(&out), true))
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(m: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    let chol = m.clone().cholesky().ok_or(Error::Singular(context))?;
    Ok(symmetrize(&chol.inverse()))
}

/// `ln det(m)` for a symmetric positive definite matrix.
pub fn spd_log_det(m: &DMatrix<f64>, context: &'static str) -> Result<f64> {
    let chol = m.clone().cholesky().ok_or(Error::Singular(context))?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// Solves `m x = b` for SPD `m`, returning `x` and `ln det(m)`.
pub fn spd_solve_logdet(
    m: &DMatrix<f64>,
    b: &DVector<f64>,
    context: &'static str,
) -> Result<(DVector<f64>, f64)> {
    let chol = m.clone().cholesky().ok_or(Error::Singular(context))?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok((chol.solve(b), logdet))
}

/// Lower-triangular factor `L` with `L Lᵀ = m` for a PSD `m`. Falls back to
/// an eigen square root when the Cholesky factorization fails, so singular
/// (e.g. zero) covariances are accepted.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let s = symmetrize(m);
    if let Some(chol) = s.clone().cholesky() {
        return chol.l();
    }
    let eig = s.symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals)
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol * m.amax().max(1.0)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrize(m).symmetric_eigen().eigenvalues.min()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_leaves_spd_matrix_untouched() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let (f, hit) = floor_spd(&m).unwrap();
        assert!(!hit);
        assert_eq!(f, m);
    }

    #[test]
    fn floor_clamps_indefinite_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -3.0]);
        let (f, hit) = floor_spd(&m).unwrap();
        assert!(hit);
        let eps = floor_level(&symmetrize(&m));
        assert!(min_eigenvalue(&f) >= eps * (1.0 - 1e-6));
        assert!(is_symmetric(&f, 1e-12));
    }

    #[test]
    fn floor_rejects_nan() {
        let m = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(floor_spd(&m).is_err());
    }

    #[test]
    fn psd_sqrt_handles_zero() {
        let z = DMatrix::<f64>::zeros(3, 3);
        let l = psd_sqrt(&z);
        assert!(l.amax() == 0.0);
    }
}
