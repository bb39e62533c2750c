//! Small dense symmetric-matrix helpers shared across the crate.
//!
//! Everything here works on explicit d×d matrices with d at most ~16;
//! spectral routines go through nalgebra's symmetric eigendecomposition.

use crate::error::Error;
use crate::Result;
use nalgebra::{DMatrix, DVector};

/// Threshold below which a matrix is accepted as symmetric and symmetrized.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

/// Returns the symmetrized matrix (A + Aᵀ)/2 after checking that the
/// asymmetry is within `threshold` relative to the matrix scale.
pub fn symmetrize_checked(a: &DMatrix<f64>, threshold: f64) -> Result<DMatrix<f64>> {
    let scale = a.amax().max(1.0);
    let mut asym: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            asym = asym.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if asym > threshold * scale {
        return Err(Error::Asymmetric {
            asym,
            threshold: threshold * scale,
        });
    }
    Ok(0.5 * (a + a.transpose()))
}

/// Maximum absolute off-diagonal asymmetry |A_ij − A_ji|.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut asym: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            asym = asym.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    asym
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Applies `f` to the spectrum of a symmetric matrix: Q f(Λ) Qᵀ.
pub fn sym_map(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eigen = a.clone().symmetric_eigen();
    let q = &eigen.eigenvectors;
    let mut scaled = q.clone();
    for (j, lambda) in eigen.eigenvalues.iter().enumerate() {
        let fl = f(*lambda);
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= fl;
        }
    }
    &scaled * q.transpose()
}

/// Symmetric square root of a positive-definite matrix.
pub fn sym_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let min = min_eigenvalue(a);
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite { min_eig: min });
    }
    Ok(sym_map(a, f64::sqrt))
}

/// Symmetric inverse square root of a positive-definite matrix.
pub fn sym_inv_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let min = min_eigenvalue(a);
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite { min_eig: min });
    }
    Ok(sym_map(a, |l| 1.0 / l.sqrt()))
}

/// Hilbert–Schmidt (Frobenius) norm.
pub fn hs_norm(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Hilbert–Schmidt inner product ⟨A, B⟩ = tr(AᵀB).
pub fn hs_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Operator norm of a symmetric matrix (largest absolute eigenvalue).
pub fn op_norm_sym(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, l| m.max(l.abs()))
}

/// Quadratic form xᵀ A x.
pub fn quad_form(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    (x.transpose() * a * x)[(0, 0)]
}
