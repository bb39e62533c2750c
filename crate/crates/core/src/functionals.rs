//! Scalar functionals of weighted measures e^{-V}γ and of transport maps:
//! Fisher information, relative entropy, quadratic transport cost, the
//! regularized determinant det₂, the Ornstein–Uhlenbeck operator, the
//! Monge–Ampère residual of a candidate map, and the second-order terms
//! that the estimate checks are built from.
//!
//! Every integral takes the quadrature rule explicitly; callers own the
//! accuracy/cost trade-off. Potentials are expected normalized (unit mass
//! for e^{-V}γ) wherever a function says so.

use crate::error::Error;
use crate::fields::ScalarField;
use crate::linalg;
use crate::potentials::Potential;
use crate::quadrature::{self, Accumulator, QuadratureRule};
use crate::transport::{self, TransportMap};
use crate::Result;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Extra points per axis used for the truncation estimate of a
/// `FunctionalValue`.
pub const REFINE_STEP: usize = 8;

/// Entropy of a normalized measure is nonnegative; quadrature may dip
/// below zero by at most this much before it is reported as an error.
pub const ENTROPY_NEGATIVE_SLACK: f64 = 1e-8;

/// A named scalar integral together with the rule order that produced it
/// and a truncation estimate (the change under `REFINE_STEP` extra points
/// per axis). The estimate is what downstream tolerance policies key on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionalValue {
    pub name: String,
    pub value: f64,
    pub order: usize,
    pub truncation: f64,
}

/// Evaluates `eval` at `rule` and at a refined rule, packaging the result
/// with its truncation estimate. Errors if the value is not finite.
pub fn functional_value<F>(name: &str, rule: &QuadratureRule, eval: F) -> Result<FunctionalValue>
where
    F: Fn(&QuadratureRule) -> Result<f64>,
{
    let value = eval(rule)?;
    if !value.is_finite() {
        return Err(Error::NonFinite {
            context: "functional evaluation",
            value,
        });
    }
    let refined = eval(&rule.refined(REFINE_STEP)?)?;
    Ok(FunctionalValue {
        name: name.to_owned(),
        value,
        order: rule.order(),
        truncation: (value - refined).abs(),
    })
}

/// ∫ |∇V|² e^{-V} dγ for a normalized potential.
pub fn fisher_information(v: &Potential, rule: &QuadratureRule) -> Result<f64> {
    quadrature::integrate_weighted(rule, v, |x| v.grad(x).norm_squared())
}

/// Entropy of e^{-V}γ relative to γ: ∫ (−V) e^{-V} dγ. Nonnegative for a
/// normalized potential; values below −`ENTROPY_NEGATIVE_SLACK` indicate
/// the potential was not normalized and are reported as errors.
pub fn relative_entropy(v: &Potential, rule: &QuadratureRule) -> Result<f64> {
    let ent = quadrature::integrate_weighted(rule, v, |x| -v.value(x))?;
    if ent < -ENTROPY_NEGATIVE_SLACK {
        return Err(Error::Normalization(format!(
            "relative entropy {ent:.3e} is negative; potential is not normalized"
        )));
    }
    Ok(ent)
}

/// Quadratic cost of the map against its source: ∫ |T(x) − x|² e^{-V} dγ.
/// For the optimal map this is W₂²(e^{-V}γ, e^{-W}γ).
pub fn w2_cost_from_map(
    map: &TransportMap,
    v: &Potential,
    rule: &QuadratureRule,
) -> Result<f64> {
    if rule.dim() != map.dim() {
        return Err(Error::DimMismatch {
            expected: map.dim(),
            got: rule.dim(),
        });
    }
    if v.dim() != map.dim() {
        return Err(Error::DimMismatch {
            expected: map.dim(),
            got: v.dim(),
        });
    }
    let mut x = vec![0.0; rule.dim()];
    let mut acc = Accumulator::new();
    for i in 0..rule.len() {
        let w = rule.node(i, &mut x);
        let displacement = transport::map_phi_grad(map, &x)?;
        acc.add(w * (-v.value(&x)).exp() * displacement.norm_squared());
    }
    Ok(acc.total())
}

/// (sign of det A, ln |det A|). Symmetric matrices go through the
/// eigendecomposition, everything else through a pivoted LU; the log of
/// the magnitude is accumulated term by term so it never overflows.
fn log_abs_det(a: &DMatrix<f64>) -> Result<(f64, f64)> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimMismatch {
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    match linalg::symmetrize_checked(a, linalg::SYMMETRY_TOLERANCE) {
        Ok(sym) => {
            let mut sign = 1.0;
            let mut acc = Accumulator::new();
            for l in linalg::sym_eigenvalues(&sym) {
                if l == 0.0 {
                    return Ok((0.0, f64::NEG_INFINITY));
                }
                if l < 0.0 {
                    sign = -sign;
                }
                acc.add(l.abs().ln());
            }
            Ok((sign, acc.total()))
        }
        Err(_) => {
            let lu = a.clone().lu();
            let det = lu.determinant();
            if det == 0.0 {
                return Ok((0.0, f64::NEG_INFINITY));
            }
            if !det.is_finite() {
                return Err(Error::NonFinite {
                    context: "determinant",
                    value: det,
                });
            }
            let mut acc = Accumulator::new();
            let u = lu.u();
            for i in 0..a.nrows() {
                acc.add(u[(i, i)].abs().ln());
            }
            Ok((det.signum(), acc.total()))
        }
    }
}

/// Regularized determinant det₂(A) = e^{tr(I−A)} det A. Defined for any
/// square matrix; lies in [0, 1] when A is symmetric positive semidefinite.
pub fn det2(a: &DMatrix<f64>) -> Result<f64> {
    let (sign, log_abs) = log_abs_det(a)?;
    let value = sign * (a.nrows() as f64 - a.trace() + log_abs).exp();
    if !value.is_finite() {
        return Err(Error::NonFinite {
            context: "regularized determinant",
            value,
        });
    }
    Ok(value)
}

/// ln det₂(A) = tr(I−A) + ln det A, requiring det A > 0.
pub fn log_det2(a: &DMatrix<f64>) -> Result<f64> {
    let (sign, log_abs) = log_abs_det(a)?;
    if sign <= 0.0 || !log_abs.is_finite() {
        return Err(Error::NonPositiveDeterminant);
    }
    Ok(a.nrows() as f64 - a.trace() + log_abs)
}

/// Ornstein–Uhlenbeck operator Lf(x) = Δf(x) − ⟨x, ∇f(x)⟩.
pub fn ou_apply<F: ScalarField + ?Sized>(f: &F, x: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), f.dim());
    let grad = f.grad(x);
    let mut drift = 0.0;
    for (xi, gi) in x.iter().zip(grad.iter()) {
        drift += xi * gi;
    }
    f.hessian(x).trace() - drift
}

/// Pointwise residual of the change-of-variables equation for T = id + ∇φ
/// pushing e^{-V}γ to e^{-W}γ:
///
///   r(x) = −V(x) + W(T(x)) − Lφ(x) + ½|∇φ(x)|² − ln det₂(I + ∇²φ(x)).
///
/// Zero wherever the map actually transports one measure to the other.
pub fn ma_residual(
    v: &Potential,
    w: &Potential,
    map: &TransportMap,
    x: &[f64],
) -> Result<f64> {
    let dim = map.dim();
    if v.dim() != dim {
        return Err(Error::DimMismatch {
            expected: dim,
            got: v.dim(),
        });
    }
    if w.dim() != dim {
        return Err(Error::DimMismatch {
            expected: dim,
            got: w.dim(),
        });
    }
    let t = transport::map_value(map, x)?;
    let grad_phi = transport::map_phi_grad(map, x)?;
    let jac = transport::map_jacobian(map, x)?;
    let mut drift = 0.0;
    for (xi, gi) in x.iter().zip(grad_phi.iter()) {
        drift += xi * gi;
    }
    // Lφ = tr ∇²φ − ⟨x, ∇φ⟩, with ∇²φ = ∇T − I.
    let l_phi = jac.trace() - dim as f64 - drift;
    let log_d2 = log_det2(&jac)?;
    Ok(-v.value(x) + w.value(t.as_slice()) - l_phi + 0.5 * grad_phi.norm_squared() - log_d2)
}

/// Σ_a u_aᵀ ∇²W(T(x)) u_a over the standard basis, where u_a is the a-th
/// column of ∇²φ(x) (equivalently the directional derivative D_a ∇φ).
pub fn nw_term(w: &Potential, map: &TransportMap, x: &[f64]) -> Result<f64> {
    if w.dim() != map.dim() {
        return Err(Error::DimMismatch {
            expected: map.dim(),
            got: w.dim(),
        });
    }
    let t = transport::map_value(map, x)?;
    let jac = transport::map_jacobian(map, x)?;
    let hess_w = w.hessian(t.as_slice());
    let mut acc = Accumulator::new();
    for a in 0..map.dim() {
        let mut u = jac.column(a).clone_owned();
        u[a] -= 1.0;
        acc.add(linalg::quad_form(&hess_w, &u));
    }
    Ok(acc.total())
}

/// Σ_a ‖(I+∇²φ)^{-1/2} (D_a ∇²φ) (I+∇²φ)^{-1/2}‖²_HS over the standard
/// basis. Zero for affine maps; needs third derivatives otherwise.
pub fn sandwich_term(map: &TransportMap, x: &[f64]) -> Result<f64> {
    let jac = transport::map_jacobian(map, x)?;
    let root_inv = linalg::sym_inv_sqrt(&jac)?;
    let dim = map.dim();
    let mut direction = vec![0.0; dim];
    let mut acc = Accumulator::new();
    for a in 0..dim {
        direction.iter_mut().for_each(|d| *d = 0.0);
        direction[a] = 1.0;
        let da = transport::map_third_derivative(map, x, &direction)?;
        let m = &root_inv * da * &root_inv;
        acc.add(linalg::hs_inner(&m, &m));
    }
    Ok(acc.total())
}

/// Pieces of the a priori bound ∫(Lf)² e^{−|∇f|²} e^{-V} dγ ≤ K·(1 +
/// ∫|∇²f|² e^{-V} dγ + ∫|∇V|² e^{-V} dγ): the left side, the three
/// right-side components, and the constant the data implies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundDiagnostic {
    pub lhs: f64,
    pub rhs_components: [f64; 3],
    pub implied_constant: f64,
}

/// Evaluates the `BoundDiagnostic` integrals for a field f against a
/// normalized potential.
pub fn ou_square_bound<F: ScalarField + ?Sized>(
    f: &F,
    v: &Potential,
    rule: &QuadratureRule,
) -> Result<BoundDiagnostic> {
    if f.dim() != rule.dim() {
        return Err(Error::DimMismatch {
            expected: rule.dim(),
            got: f.dim(),
        });
    }
    let lhs = quadrature::integrate_weighted(rule, v, |x| {
        let lf = ou_apply(f, x);
        lf * lf * (-f.grad(x).norm_squared()).exp()
    })?;
    let hess_sq = quadrature::integrate_weighted(rule, v, |x| {
        let h = f.hessian(x);
        linalg::hs_inner(&h, &h)
    })?;
    let fisher = fisher_information(v, rule)?;
    let rhs_components = [1.0, hess_sq, fisher];
    let sum: f64 = rhs_components.iter().sum();
    Ok(BoundDiagnostic {
        lhs,
        rhs_components,
        implied_constant: lhs / sum,
    })
}
