//! Standalone matrix facts used by the transport estimates: a Hilbert-Schmidt
//! lower bound for congruence-sandwiched matrices, and an exact integral
//! representation of the regularized log-determinant gap between two
//! symmetric perturbations of the identity.
//!
//! Everything here is finite-dimensional and pure; the batteries at the
//! bottom drive the checks over seeded random pairs so the CLI and the
//! acceptance suite share one code path.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Error;
use crate::linalg::{
    hs_inner, hs_norm, min_eigenvalue, op_norm_sym, sym_eigenvalues, sym_inv_sqrt,
    symmetrize_checked, SYMMETRY_TOLERANCE,
};
use crate::quadrature::gauss_legendre_01;
use crate::Result;

/// Largest matrix side accepted for a pair.
pub const MAX_PAIR_DIM: usize = 16;
/// A positivity flag is granted when the smallest eigenvalue clears this.
pub const PD_THRESHOLD: f64 = 1e-10;
/// Numerical slack allowed when asserting the Hilbert-Schmidt lower bound.
pub const BOUND_SLACK: f64 = 1e-10;
/// Residual beyond which the log-det identity counts as broken.
pub const IDENTITY_RESIDUAL: f64 = 1e-8;
/// Default node count for the t-integral.
pub const DEFAULT_T_ORDER: usize = 32;
/// Node count that keeps the t-integral below the identity tolerance even
/// when a pair sits at the 0.1 conditioning floor. The integrand is analytic
/// but its complex poles approach [0,1] as the interpolant's smallest
/// eigenvalue shrinks, so convergence slows near the floor; 32 nodes can
/// leave ~1e-8 truncation there while 64 reach rounding level.
pub const FLOOR_SAFE_T_ORDER: usize = 64;

/// A pair of symmetric matrices with positivity diagnostics fixed at
/// construction. Asymmetry beyond the library threshold is rejected rather
/// than silently averaged away; rounding-level asymmetry is symmetrized.
#[derive(Debug, Clone)]
pub struct MatrixPair {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    a_min_eig: f64,
    shifted_a_min_eig: f64,
    shifted_b_min_eig: f64,
}

impl MatrixPair {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || !b.is_square() {
            return Err(Error::invalid("matrix", "pair entries must be square"));
        }
        let dim = a.nrows();
        if dim == 0 || dim > MAX_PAIR_DIM {
            return Err(Error::invalid(
                "dim",
                format!("pair dimension must be in 1..={MAX_PAIR_DIM}, got {dim}"),
            ));
        }
        if b.nrows() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: b.nrows(),
            });
        }
        let a = symmetrize_checked(&a, SYMMETRY_TOLERANCE)?;
        let b = symmetrize_checked(&b, SYMMETRY_TOLERANCE)?;
        let eye = DMatrix::<f64>::identity(dim, dim);
        let a_min_eig = min_eigenvalue(&a);
        let shifted_a_min_eig = min_eigenvalue(&(&eye + &a));
        let shifted_b_min_eig = min_eigenvalue(&(&eye + &b));
        Ok(Self {
            a,
            b,
            a_min_eig,
            shifted_a_min_eig,
            shifted_b_min_eig,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn a_min_eig(&self) -> f64 {
        self.a_min_eig
    }

    pub fn shifted_a_min_eig(&self) -> f64 {
        self.shifted_a_min_eig
    }

    pub fn shifted_b_min_eig(&self) -> f64 {
        self.shifted_b_min_eig
    }

    /// Whether `a` itself is positive definite.
    pub fn a_spd(&self) -> bool {
        self.a_min_eig > PD_THRESHOLD
    }

    /// Whether `I + a` is positive definite.
    pub fn shifted_a_pd(&self) -> bool {
        self.shifted_a_min_eig > PD_THRESHOLD
    }

    /// Whether `I + b` is positive definite.
    pub fn shifted_b_pd(&self) -> bool {
        self.shifted_b_min_eig > PD_THRESHOLD
    }
}

/// Outcome of the sandwiched Hilbert-Schmidt bound on one pair.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Outcome of the log-det gap identity on one pair.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub ok: bool,
}

/// ‖A^{-1/2} B A^{-1/2}‖_HS ≥ ‖B‖_HS / ‖A‖_op for positive definite A.
/// Equality holds exactly when A is a multiple of the identity.
pub fn hs_lower_bound(pair: &MatrixPair) -> Result<BoundCheck> {
    if !pair.a_spd() {
        return Err(Error::NotPositiveDefinite {
            min_eig: pair.a_min_eig,
        });
    }
    let root = sym_inv_sqrt(pair.a())?;
    let sandwiched = &root * pair.b() * &root;
    let lhs = hs_norm(&sandwiched);
    let rhs = hs_norm(pair.b()) / op_norm_sym(pair.a());
    Ok(BoundCheck {
        lhs,
        rhs,
        holds: lhs >= rhs - BOUND_SLACK,
    })
}

fn require_shifted_pd(pair: &MatrixPair) -> Result<()> {
    if !pair.shifted_a_pd() {
        return Err(Error::NotPositiveDefinite {
            min_eig: pair.shifted_a_min_eig,
        });
    }
    if !pair.shifted_b_pd() {
        return Err(Error::NotPositiveDefinite {
            min_eig: pair.shifted_b_min_eig,
        });
    }
    Ok(())
}

/// Closed form of the gap: −log det₂((I+A)(I+B)^{-1}). The determinant of the
/// generally nonsymmetric product is taken through the congruent symmetric
/// form (I+B)^{-1/2}(I+A)(I+B)^{-1/2}, and the trace part through
/// trace(I − (I+A)(I+B)^{-1}) = ⟨B−A, (I+B)^{-1}⟩_HS.
pub fn logdet_gap(pair: &MatrixPair) -> Result<f64> {
    require_shifted_pd(pair)?;
    let dim = pair.dim();
    let eye = DMatrix::<f64>::identity(dim, dim);
    let root = sym_inv_sqrt(&(&eye + pair.b()))?;
    let symmetric_form = symmetrize_checked(&(&root * (&eye + pair.a()) * &root), SYMMETRY_TOLERANCE)?;
    let mut log_det = 0.0;
    for lambda in sym_eigenvalues(&symmetric_form) {
        if lambda <= 0.0 {
            return Err(Error::NonPositiveDeterminant);
        }
        log_det += lambda.ln();
    }
    let inverse = &root * &root;
    let trace_term = hs_inner(&(pair.b() - pair.a()), &inverse);
    Ok(-(log_det + trace_term))
}

/// Integral form of the same gap:
/// ∫₀¹ (1−t) ‖M_t^{-1/2} (A−B) M_t^{-1/2}‖²_HS dt with M_t = I + (1−t)B + tA,
/// by Gauss-Legendre on [0,1] at `t_order` nodes. M_t is a convex combination
/// of I+A and I+B, so endpoint positivity covers the whole segment; each node
/// still gets a fresh eigendecomposition and fails loudly if positivity is
/// lost.
pub fn logdet_gap_integral(pair: &MatrixPair, t_order: usize) -> Result<f64> {
    require_shifted_pd(pair)?;
    let nodes = gauss_legendre_01(t_order)?;
    let dim = pair.dim();
    let eye = DMatrix::<f64>::identity(dim, dim);
    let diff = pair.a() - pair.b();
    let mut total = 0.0;
    for (t, w) in nodes {
        let interpolant = &eye + pair.b() * (1.0 - t) + pair.a() * t;
        let root = sym_inv_sqrt(&interpolant)?;
        let sandwiched = &root * &diff * &root;
        let norm = hs_norm(&sandwiched);
        total += w * (1.0 - t) * norm * norm;
    }
    Ok(total)
}

/// Evaluates both forms of the gap and reports the residual. `ok` uses the
/// fixed identity tolerance.
pub fn trace_identity_check(pair: &MatrixPair, t_order: usize) -> Result<IdentityCheck> {
    let lhs = logdet_gap(pair)?;
    let rhs = logdet_gap_integral(pair, t_order)?;
    let residual = (lhs - rhs).abs();
    Ok(IdentityCheck {
        lhs,
        rhs,
        residual,
        ok: residual <= IDENTITY_RESIDUAL,
    })
}

fn pair_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian_matrix(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |_, _| rng.sample(rand_distr::StandardNormal))
}

/// Symmetric part of a standard Gaussian matrix.
fn sample_symmetric(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = gaussian_matrix(dim, rng);
    (&g + g.transpose()) * 0.5
}

/// Haar-ish orthogonal factor: QR of a Gaussian matrix with the signs fixed
/// so the R diagonal is nonnegative, which makes the draw deterministic.
fn sample_orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = gaussian_matrix(dim, rng);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            for i in 0..dim {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// QΛQᵀ with Λ uniform on [0.1, 4]; eigenvalues land in that interval.
fn sample_spd(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let q = sample_orthogonal(dim, rng);
    let spectrum = DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            rng.gen_range(0.1..=4.0)
        } else {
            0.0
        }
    });
    let m = &q * spectrum * q.transpose();
    (&m + m.transpose()) * 0.5
}

fn check_sample_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_PAIR_DIM {
        return Err(Error::invalid(
            "dim",
            format!("pair dimension must be in 1..={MAX_PAIR_DIM}, got {dim}"),
        ));
    }
    Ok(())
}

/// Seeded pair for the sandwich bound: A positive definite with spectrum in
/// [0.1, 4], B an unconstrained symmetric Gaussian draw.
pub fn sample_bound_pair(dim: usize, seed: u64, stream: u64) -> Result<MatrixPair> {
    check_sample_dim(dim)?;
    let mut rng = pair_rng(seed, stream);
    let a = sample_spd(dim, &mut rng);
    let b = sample_symmetric(dim, &mut rng);
    MatrixPair::new(a, b)
}

/// Seeded pair for the log-det identity: I+A drawn with spectrum in [0.1, 4],
/// and B a symmetric Gaussian draw rescaled so the smallest eigenvalue of
/// I+B is at least 0.1.
pub fn sample_shifted_pair(dim: usize, seed: u64, stream: u64) -> Result<MatrixPair> {
    check_sample_dim(dim)?;
    let mut rng = pair_rng(seed, stream);
    let eye = DMatrix::<f64>::identity(dim, dim);
    let a = sample_spd(dim, &mut rng) - &eye;
    let mut b = sample_symmetric(dim, &mut rng);
    let bottom = min_eigenvalue(&b);
    if bottom < -0.9 {
        b *= 0.9 / (-bottom);
    }
    MatrixPair::new(a, b)
}

/// Summary of the sandwich bound over a battery of seeded pairs.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundBattery {
    pub checked: usize,
    pub violations: usize,
    /// Smallest lhs − rhs seen; nonnegative up to rounding when the bound
    /// holds throughout.
    pub worst_margin: f64,
}

/// Summary of the log-det identity over a battery of seeded pairs.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdentityBattery {
    pub checked: usize,
    pub failures: usize,
    pub worst_residual: f64,
}

fn check_battery_shape(dims: &[usize], per_dim: usize) -> Result<()> {
    if dims.is_empty() || per_dim == 0 {
        return Err(Error::invalid(
            "battery",
            "need at least one dimension and one pair per dimension",
        ));
    }
    Ok(())
}

/// Runs the sandwich bound on `per_dim` seeded pairs for every listed
/// dimension. Streams are consumed in order, so the battery is deterministic
/// in (dims, per_dim, seed).
pub fn bound_battery(dims: &[usize], per_dim: usize, seed: u64) -> Result<BoundBattery> {
    check_battery_shape(dims, per_dim)?;
    let mut checked = 0usize;
    let mut violations = 0usize;
    let mut worst_margin = f64::INFINITY;
    for &dim in dims {
        for _ in 0..per_dim {
            let pair = sample_bound_pair(dim, seed, checked as u64)?;
            let check = hs_lower_bound(&pair)?;
            if !check.holds {
                violations += 1;
            }
            worst_margin = worst_margin.min(check.lhs - check.rhs);
            checked += 1;
        }
    }
    Ok(BoundBattery {
        checked,
        violations,
        worst_margin,
    })
}

/// Runs the log-det identity on `per_dim` seeded pairs for every listed
/// dimension at the given t-integral order.
pub fn identity_battery(
    dims: &[usize],
    per_dim: usize,
    seed: u64,
    t_order: usize,
) -> Result<IdentityBattery> {
    check_battery_shape(dims, per_dim)?;
    let mut checked = 0usize;
    let mut failures = 0usize;
    let mut worst_residual = 0.0f64;
    for &dim in dims {
        for _ in 0..per_dim {
            let pair = sample_shifted_pair(dim, seed, checked as u64)?;
            let check = trace_identity_check(&pair, t_order)?;
            if !check.ok {
                failures += 1;
            }
            worst_residual = worst_residual.max(check.residual);
            checked += 1;
        }
    }
    Ok(IdentityBattery {
        checked,
        failures,
        worst_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn diag(entries: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(entries.len(), entries.len(), |i, j| {
            if i == j {
                entries[i]
            } else {
                0.0
            }
        })
    }

    fn fixed_symmetric() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.7, -0.2, 0.1, -0.2, 1.3, 0.4, 0.1, 0.4, -0.6])
    }

    #[test]
    fn pair_construction_computes_the_positivity_flags() {
        let pair = MatrixPair::new(diag(&[2.0, 0.5]), diag(&[-0.3, 4.0])).unwrap();
        assert!(pair.a_spd());
        assert!(pair.shifted_a_pd());
        assert!(pair.shifted_b_pd());
        assert_abs_diff_eq!(pair.a_min_eig(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(pair.shifted_b_min_eig(), 0.7, epsilon = 1e-12);

        let indefinite = MatrixPair::new(diag(&[1.0, -0.5]), diag(&[-2.0, 0.0])).unwrap();
        assert!(!indefinite.a_spd());
        assert!(indefinite.shifted_a_pd());
        assert!(!indefinite.shifted_b_pd());
    }

    #[test]
    fn pair_construction_rejects_bad_shapes() {
        assert!(MatrixPair::new(DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)).is_err());
        assert!(MatrixPair::new(DMatrix::zeros(17, 17), DMatrix::zeros(17, 17)).is_err());
        assert!(MatrixPair::new(DMatrix::zeros(2, 3), DMatrix::zeros(2, 2)).is_err());
        assert!(MatrixPair::new(DMatrix::zeros(2, 2), DMatrix::zeros(3, 3)).is_err());
        let mut lopsided = DMatrix::zeros(2, 2);
        lopsided[(0, 1)] = 1e-3;
        assert!(MatrixPair::new(lopsided, DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn hs_lower_bound_is_equality_at_the_identity() {
        let b = fixed_symmetric();
        let pair = MatrixPair::new(DMatrix::identity(3, 3), b.clone()).unwrap();
        let check = hs_lower_bound(&pair).unwrap();
        assert_abs_diff_eq!(check.lhs, hs_norm(&b), epsilon = 1e-12);
        assert_abs_diff_eq!(check.rhs, hs_norm(&b), epsilon = 1e-12);
        assert!(check.holds);
    }

    #[test]
    fn hs_lower_bound_matches_the_diagonal_hand_computation() {
        // A = diag(1,4), B = I: sandwiching gives diag(1, 1/4), so the lhs is
        // √(1 + 1/16) = √17/4, while the rhs is √2/4.
        let pair = MatrixPair::new(diag(&[1.0, 4.0]), DMatrix::identity(2, 2)).unwrap();
        let check = hs_lower_bound(&pair).unwrap();
        assert_abs_diff_eq!(check.lhs, 17.0f64.sqrt() / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(check.lhs, 1.0307764064044151, epsilon = 1e-12);
        assert_abs_diff_eq!(check.rhs, 2.0f64.sqrt() / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(check.rhs, 0.35355339059327373, epsilon = 1e-12);
        assert!(check.holds);
    }

    #[test]
    fn hs_lower_bound_is_trivial_for_zero_b() {
        let pair = MatrixPair::new(diag(&[3.0, 0.2]), DMatrix::zeros(2, 2)).unwrap();
        let check = hs_lower_bound(&pair).unwrap();
        assert_eq!(check.lhs, 0.0);
        assert_eq!(check.rhs, 0.0);
        assert!(check.holds);
    }

    #[test]
    fn hs_lower_bound_is_equality_for_scaled_identities() {
        let b = fixed_symmetric();
        for lambda in [0.3, 1.0, 2.5] {
            let a = DMatrix::<f64>::identity(3, 3) * lambda;
            let pair = MatrixPair::new(a, b.clone()).unwrap();
            let check = hs_lower_bound(&pair).unwrap();
            assert_abs_diff_eq!(check.lhs, check.rhs, epsilon = 1e-12);
            assert!(check.holds);
        }
    }

    #[test]
    fn hs_lower_bound_rejects_non_spd_a() {
        let pair = MatrixPair::new(diag(&[1.0, -1.0]), DMatrix::identity(2, 2)).unwrap();
        assert!(matches!(
            hs_lower_bound(&pair),
            Err(Error::NotPositiveDefinite { .. })
        ));
        let zero = MatrixPair::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2)).unwrap();
        assert!(hs_lower_bound(&zero).is_err());
    }

    #[test]
    fn logdet_gap_vanishes_for_equal_matrices() {
        let b = fixed_symmetric() * 0.4;
        let pair = MatrixPair::new(b.clone(), b).unwrap();
        assert_abs_diff_eq!(logdet_gap(&pair).unwrap(), 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(
            logdet_gap_integral(&pair, DEFAULT_T_ORDER).unwrap(),
            0.0,
            epsilon = 1e-13
        );
    }

    #[test]
    fn logdet_gap_matches_the_scalar_closed_form() {
        // 1D, a = 1, b = 0: ratio 2, so the gap is 2 − 1 − ln 2 = 1 − ln 2.
        // The integral form is ∫₀¹ (1−t)/(1+t)² dt with the same value.
        let pair = MatrixPair::new(diag(&[1.0]), diag(&[0.0])).unwrap();
        let oracle = 1.0 - std::f64::consts::LN_2;
        let gap = logdet_gap(&pair).unwrap();
        assert_abs_diff_eq!(gap, oracle, epsilon = 1e-14);
        assert_abs_diff_eq!(gap, 0.30685281944005469, epsilon = 1e-14);
        let integral = logdet_gap_integral(&pair, DEFAULT_T_ORDER).unwrap();
        assert_abs_diff_eq!(integral, oracle, epsilon = 1e-10);
    }

    #[test]
    fn logdet_gap_rejects_non_pd_shifts() {
        let pair = MatrixPair::new(diag(&[-1.5]), diag(&[0.0])).unwrap();
        assert!(matches!(
            logdet_gap(&pair),
            Err(Error::NotPositiveDefinite { .. })
        ));
        let pair = MatrixPair::new(diag(&[0.0]), diag(&[-2.0])).unwrap();
        assert!(logdet_gap_integral(&pair, DEFAULT_T_ORDER).is_err());
    }

    #[test]
    fn trace_identity_holds_on_random_pairs() {
        for dim in 1..=8usize {
            for stream in 0..4u64 {
                let pair = sample_shifted_pair(dim, 71, stream).unwrap();
                let check = trace_identity_check(&pair, FLOOR_SAFE_T_ORDER).unwrap();
                assert!(
                    check.ok,
                    "dim {dim} stream {stream}: residual {}",
                    check.residual
                );
            }
        }
    }

    #[test]
    fn trace_identity_integral_is_stable_in_the_node_count() {
        let pair = sample_shifted_pair(4, 5, 2).unwrap();
        let coarse = logdet_gap_integral(&pair, 32).unwrap();
        let fine = logdet_gap_integral(&pair, 48).unwrap();
        assert_abs_diff_eq!(coarse, fine, epsilon = 1e-10);
        let check = trace_identity_check(&pair, 32).unwrap();
        assert!(check.ok, "residual {}", check.residual);
    }

    #[test]
    fn logdet_gap_is_nonnegative_on_random_pairs() {
        for dim in [1usize, 3, 6] {
            for stream in 0..8u64 {
                let pair = sample_shifted_pair(dim, 909, stream).unwrap();
                let gap = logdet_gap(&pair).unwrap();
                assert!(gap >= -1e-12, "dim {dim} stream {stream}: gap {gap}");
            }
        }
    }

    #[test]
    fn sampled_pairs_are_deterministic_and_stream_separated() {
        let first = sample_bound_pair(4, 9, 3).unwrap();
        let again = sample_bound_pair(4, 9, 3).unwrap();
        assert_eq!(first.a(), again.a());
        assert_eq!(first.b(), again.b());
        let other = sample_bound_pair(4, 9, 4).unwrap();
        assert_ne!(first.a(), other.a());
    }

    #[test]
    fn sampled_spectra_sit_in_the_advertised_windows() {
        for stream in 0..6u64 {
            let bound = sample_bound_pair(5, 33, stream).unwrap();
            assert!(bound.a_min_eig() >= 0.1 - 1e-9);
            assert!(op_norm_sym(bound.a()) <= 4.0 + 1e-9);

            let shifted = sample_shifted_pair(5, 33, stream).unwrap();
            assert!(shifted.shifted_a_min_eig() >= 0.1 - 1e-9);
            assert!(shifted.shifted_a_min_eig() <= 4.0 + 1e-9);
            assert!(shifted.shifted_b_min_eig() >= 0.1 - 1e-9);
        }
    }

    #[test]
    fn batteries_summarize_the_seeded_sweeps() {
        let dims: Vec<usize> = (1..=8).collect();
        let bound = bound_battery(&dims, 16, 2024).unwrap();
        assert_eq!(bound.checked, 128);
        assert_eq!(bound.violations, 0);
        assert!(bound.worst_margin >= -BOUND_SLACK);

        let identity = identity_battery(&dims, 8, 2024, FLOOR_SAFE_T_ORDER).unwrap();
        assert_eq!(identity.checked, 64);
        assert_eq!(
            identity.failures, 0,
            "worst residual {}",
            identity.worst_residual
        );
        assert!(identity.worst_residual <= IDENTITY_RESIDUAL);
    }

    #[test]
    fn batteries_reject_empty_shapes() {
        assert!(bound_battery(&[], 4, 1).is_err());
        assert!(identity_battery(&[2], 0, 1, 32).is_err());
    }

}
