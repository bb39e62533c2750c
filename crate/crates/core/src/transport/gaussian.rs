//! Closed-form optimal map between Gaussian pairs.
//!
//! A quadratic potential V(x) = ½xᵀAx + bᵀx + k weights γ into a Gaussian
//! with covariance Σ = (I+A)⁻¹ and mean μ = −(I+A)⁻¹b, valid whenever I+A
//! is positive definite. The monotone affine map between two such measures
//! is T(x) = M(x − μ₁) + μ₂ with
//!   M = Σ₁^{-1/2} (Σ₁^{1/2} Σ₂ Σ₁^{1/2})^{1/2} Σ₁^{-1/2},
//! which is symmetric positive definite, so ∇T = M ≥ 0 as required.

use super::{Backend, TransportMap};
use crate::error::Error;
use crate::linalg;
use crate::potentials::Potential;
use crate::Result;
use nalgebra::{DMatrix, DVector};

/// ‖M − I‖∞ and ‖shift‖∞ below this collapse the backend to `Identity`.
const IDENTITY_TOLERANCE: f64 = 1e-13;

/// Covariance and mean of e^{-V}γ for quadratic V, or an error naming the
/// obstruction (non-quadratic kind, or I+A not positive definite).
pub(crate) fn gaussian_moments(p: &Potential) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (a, b) = p.gaussian_data().ok_or_else(|| {
        Error::invalid(
            "potential",
            "closed-form Gaussian solve needs a quadratic potential",
        )
    })?;
    let dim = p.dim();
    let prec = DMatrix::identity(dim, dim) + a;
    let min_eig = linalg::min_eigenvalue(&prec);
    if min_eig <= 0.0 {
        return Err(Error::NotPositiveDefinite { min_eig });
    }
    let sigma = linalg::sym_map(&prec, |l| 1.0 / l);
    let mu = -(&sigma * b);
    Ok((sigma, mu))
}

/// Solves for the monotone affine map pushing e^{-V}γ to e^{-W}γ.
/// Both potentials must be quadratic (possibly via shift/separable wrappers)
/// with positive-definite I+A. Returns the `Identity` backend when the two
/// measures coincide to within 1e-13.
pub fn solve_gaussian_closed_form(source: &Potential, target: &Potential) -> Result<TransportMap> {
    if source.dim() != target.dim() {
        return Err(Error::DimMismatch {
            expected: source.dim(),
            got: target.dim(),
        });
    }
    let dim = source.dim();
    let (sigma1, mu1) = gaussian_moments(source)?;
    let (sigma2, mu2) = gaussian_moments(target)?;

    let s1_half = linalg::sym_sqrt(&sigma1)?;
    let s1_inv_half = linalg::sym_inv_sqrt(&sigma1)?;
    let inner = &s1_half * &sigma2 * &s1_half;
    // inner is symmetric up to rounding; take the symmetric square root.
    let inner = 0.5 * (&inner + inner.transpose());
    let inner_half = linalg::sym_sqrt(&inner)?;
    let m = &s1_inv_half * inner_half * &s1_inv_half;
    let m = 0.5 * (&m + m.transpose());
    let shift = &mu2 - &m * &mu1;

    let dev = (&m - DMatrix::identity(dim, dim)).amax();
    let backend = if dev <= IDENTITY_TOLERANCE && shift.amax() <= IDENTITY_TOLERANCE {
        Backend::Identity
    } else {
        Backend::Linear { matrix: m, shift }
    };
    Ok(TransportMap::new(
        dim,
        source.clone(),
        target.clone(),
        backend,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{map_jacobian, map_value, Backend};
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn quad(a: DMatrix<f64>, b: DVector<f64>) -> Potential {
        Potential::quadratic(a, b, 0.0).unwrap()
    }

    #[test]
    fn pushes_covariance_forward_exactly() {
        // Source: I+A1 = [[2, 0.3], [0.3, 1]]; target: I+A2 = [[0.8, -0.1], [-0.1, 1.5]].
        let a1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.0]);
        let a2 = DMatrix::from_row_slice(2, 2, &[-0.2, -0.1, -0.1, 0.5]);
        let v = quad(a1.clone(), DVector::from_column_slice(&[0.4, -0.2]));
        let w = quad(a2.clone(), DVector::from_column_slice(&[-0.1, 0.3]));
        let map = solve_gaussian_closed_form(&v, &w).unwrap();
        let (sigma1, mu1) = gaussian_moments(&v).unwrap();
        let (sigma2, mu2) = gaussian_moments(&w).unwrap();
        let Backend::Linear { matrix, shift } = map.backend() else {
            panic!("expected linear backend");
        };
        // M Σ₁ Mᵀ = Σ₂ and M μ₁ + shift = μ₂.
        let pushed = matrix * &sigma1 * matrix.transpose();
        assert!((&pushed - &sigma2).amax() <= 1e-12, "covariance mismatch");
        let mapped_mean = matrix * &mu1 + shift;
        assert!((&mapped_mean - &mu2).amax() <= 1e-12, "mean mismatch");
        // M is symmetric positive definite.
        assert!(crate::linalg::asymmetry(matrix) <= 1e-13);
        assert!(crate::linalg::min_eigenvalue(matrix) > 0.0);
    }

    #[test]
    fn one_dim_map_is_standard_deviation_ratio() {
        // γ → N(0, 1/4): V = 0, W = 3x²/2 − ln 2 up to constants; A2 = 3.
        let v = Potential::zero(1);
        let w = quad(DMatrix::from_element(1, 1, 3.0), DVector::zeros(1));
        let map = solve_gaussian_closed_form(&v, &w).unwrap();
        let j = map_jacobian(&map, &[0.0]).unwrap();
        assert_abs_diff_eq!(j[(0, 0)], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn mean_shift_only_gives_translation() {
        let v = Potential::zero(1);
        let w = quad(DMatrix::zeros(1, 1), DVector::from_element(1, -0.7));
        let map = solve_gaussian_closed_form(&v, &w).unwrap();
        let t = map_value(&map, &[1.3]).unwrap();
        assert_abs_diff_eq!(t[0], 2.0, epsilon = 1e-13);
        let j = map_jacobian(&map, &[1.3]).unwrap();
        assert_abs_diff_eq!(j[(0, 0)], 1.0, epsilon = 1e-13);
    }

    #[test]
    fn equal_measures_collapse_to_identity() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, -0.2]);
        let b = DVector::from_column_slice(&[0.3, -0.4]);
        let v = Potential::quadratic(a.clone(), b.clone(), 1.0).unwrap();
        let w = Potential::quadratic(a, b, -2.0).unwrap();
        let map = solve_gaussian_closed_form(&v, &w).unwrap();
        assert!(matches!(map.backend(), Backend::Identity));
    }

    #[test]
    fn rejects_degenerate_precision() {
        let v = Potential::zero(1);
        let w = quad(DMatrix::from_element(1, 1, -1.0), DVector::zeros(1));
        assert!(solve_gaussian_closed_form(&v, &w).is_err());
    }

    #[test]
    fn rejects_non_quadratic_input() {
        let v = Potential::zero(1);
        let quartic = Potential::polynomial(
            1,
            vec![crate::potentials::Term {
                powers: vec![4],
                coeff: 0.25,
            }],
        )
        .unwrap();
        assert!(solve_gaussian_closed_form(&v, &quartic).is_err());
    }
}
