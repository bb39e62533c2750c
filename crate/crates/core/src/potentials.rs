//! Potentials V defining weighted Gaussian measures e^{-V}γ.
//!
//! Every potential carries analytic value, gradient, and Hessian oracles;
//! finite differences appear only in tests, as independent checks. The
//! constructors validate structure up front (symmetry of quadratic forms,
//! polynomial degree, component dimensions) so evaluation can stay
//! branch-light.

use crate::error::Error;
use crate::linalg;
use crate::quadrature::{self, QuadratureRule, SampleSet};
use crate::Result;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Maximum total degree for polynomial potentials.
pub const MAX_POLY_DEGREE: u32 = 8;

/// A potential on R^d with analytic derivatives.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Potential {
    kind: Kind,
    /// Declared semiconvexity bound c with ∇²V ≥ −c·Id, if known. Callers
    /// needing c must either read a declaration or estimate it explicitly;
    /// there is no silent default.
    declared_c: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Kind {
    /// ½ xᵀA x + bᵀx + k with A stored exactly symmetric.
    Quadratic {
        a: DMatrix<f64>,
        b: DVector<f64>,
        k: f64,
    },
    /// Sum of one-dimensional potentials over the coordinates.
    Separable { components: Vec<Potential> },
    /// Sparse multi-index polynomial Σ c_α Π x_i^{α_i}, total degree ≤ 8.
    Polynomial { dim: usize, terms: Vec<Term> },
    /// base + offset (normalization shifts).
    Shifted { base: Box<Potential>, offset: f64 },
    /// χ(|x|)·base(x) with χ a C² quintic bump: 1 on |x| ≤ inner, 0 on
    /// |x| ≥ outer.
    Cutoff {
        base: Box<Potential>,
        inner: f64,
        outer: f64,
    },
    /// min(base, cap).
    Truncated { base: Box<Potential>, cap: f64 },
    /// Gaussian smoothing E_y[ base(s·x + t·y) ] with s = e^{-eps},
    /// t = √(1−s²), evaluated by a per-axis Gauss–Hermite rule carried
    /// inline. Gradient and Hessian use the commutation rule (factors s
    /// and s² on the smoothed derivatives), so they stay analytic.
    Smoothed {
        base: Box<Potential>,
        eps: f64,
        axis_nodes: Vec<f64>,
        axis_weights: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Term {
    /// Exponent per coordinate.
    pub powers: Vec<u8>,
    pub coeff: f64,
}

impl Potential {
    /// ½ xᵀA x + bᵀx + k. `a` must be square, exactly symmetric, and match
    /// `b`'s length.
    pub fn quadratic(a: DMatrix<f64>, b: DVector<f64>, k: f64) -> Result<Potential> {
        if a.nrows() != a.ncols() || a.nrows() != b.len() || b.is_empty() {
            return Err(Error::invalid(
                "quadratic",
                format!("shape mismatch: A is {}x{}, b has {}", a.nrows(), a.ncols(), b.len()),
            ));
        }
        for i in 0..a.nrows() {
            for j in (i + 1)..a.ncols() {
                if a[(i, j)] != a[(j, i)] {
                    return Err(Error::Asymmetric {
                        asym: (a[(i, j)] - a[(j, i)]).abs(),
                        threshold: 0.0,
                    });
                }
            }
        }
        Ok(Potential {
            kind: Kind::Quadratic { a, b, k },
            declared_c: None,
        })
    }

    /// The zero potential on R^dim (so e^{-V}γ = γ).
    pub fn zero(dim: usize) -> Potential {
        Potential {
            kind: Kind::Quadratic {
                a: DMatrix::zeros(dim, dim),
                b: DVector::zeros(dim),
                k: 0.0,
            },
            declared_c: Some(0.0),
        }
    }

    /// Sum of 1D potentials acting on successive coordinates.
    pub fn separable(components: Vec<Potential>) -> Result<Potential> {
        if components.is_empty() {
            return Err(Error::invalid("separable", "needs at least one component"));
        }
        for (i, c) in components.iter().enumerate() {
            if c.dim() != 1 {
                return Err(Error::invalid(
                    "separable",
                    format!("component {i} has dim {}, expected 1", c.dim()),
                ));
            }
        }
        Ok(Potential {
            kind: Kind::Separable { components },
            declared_c: None,
        })
    }

    /// Sparse polynomial with total degree ≤ 8.
    pub fn polynomial(dim: usize, terms: Vec<Term>) -> Result<Potential> {
        if dim == 0 {
            return Err(Error::invalid("polynomial", "dim must be >= 1"));
        }
        for t in &terms {
            if t.powers.len() != dim {
                return Err(Error::invalid(
                    "polynomial",
                    format!("term has {} exponents, expected {dim}", t.powers.len()),
                ));
            }
            let total: u32 = t.powers.iter().map(|p| *p as u32).sum();
            if total > MAX_POLY_DEGREE {
                return Err(Error::invalid(
                    "polynomial",
                    format!("total degree {total} exceeds {MAX_POLY_DEGREE}"),
                ));
            }
        }
        Ok(Potential {
            kind: Kind::Polynomial { dim, terms },
            declared_c: None,
        })
    }

    /// base + offset, collapsing nested shifts.
    pub fn shifted(base: Potential, offset: f64) -> Potential {
        let declared_c = base.declared_c;
        match base.kind {
            Kind::Shifted { base: inner, offset: o } => Potential {
                kind: Kind::Shifted {
                    base: inner,
                    offset: o + offset,
                },
                declared_c,
            },
            kind => Potential {
                kind: Kind::Shifted {
                    base: Box::new(Potential { kind, declared_c }),
                    offset,
                },
                declared_c,
            },
        }
    }

    /// χ(|x|)·base with a quintic C² bump: 1 on |x| ≤ inner, 0 on
    /// |x| ≥ outer, |χ'| ≤ 15/(8(outer−inner)).
    pub fn cutoff(base: Potential, inner: f64, outer: f64) -> Result<Potential> {
        if !(inner > 0.0 && outer > inner) {
            return Err(Error::invalid(
                "cutoff",
                format!("need 0 < inner < outer, got inner={inner}, outer={outer}"),
            ));
        }
        Ok(Potential {
            kind: Kind::Cutoff {
                base: Box::new(base),
                inner,
                outer,
            },
            declared_c: None,
        })
    }

    /// min(base, cap).
    pub fn truncated(base: Potential, cap: f64) -> Potential {
        Potential {
            kind: Kind::Truncated {
                base: Box::new(base),
                cap,
            },
            declared_c: None,
        }
    }

    /// Gaussian smoothing with width parameter eps > 0, integrated by a
    /// tensor Gauss–Hermite rule of the given order.
    pub fn smoothed(base: Potential, eps: f64, order: usize) -> Result<Potential> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::invalid("eps", format!("must be positive, got {eps}")));
        }
        let rule = quadrature::gauss_hermite(1, order)?;
        if base.dim() > 4 {
            return Err(Error::TensorDim(base.dim()));
        }
        Ok(Potential {
            kind: Kind::Smoothed {
                base: Box::new(base),
                eps,
                axis_nodes: rule.axis_nodes().to_vec(),
                axis_weights: rule.axis_weights().to_vec(),
            },
            declared_c: None,
        })
    }

    /// Declares a semiconvexity bound (∇²V ≥ −c·Id). The declaration is
    /// trusted by callers after validation against sampled Hessians.
    pub fn with_semiconvexity(mut self, c: f64) -> Potential {
        self.declared_c = Some(c);
        self
    }

    pub fn declared_semiconvexity(&self) -> Option<f64> {
        self.declared_c
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            Kind::Quadratic { b, .. } => b.len(),
            Kind::Separable { components } => components.len(),
            Kind::Polynomial { dim, .. } => *dim,
            Kind::Shifted { base, .. } => base.dim(),
            Kind::Cutoff { base, .. } => base.dim(),
            Kind::Truncated { base, .. } => base.dim(),
            Kind::Smoothed { base, .. } => base.dim(),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        match &self.kind {
            Kind::Quadratic { a, b, k } => {
                let mut q = 0.0;
                for i in 0..x.len() {
                    let mut row = 0.0;
                    for j in 0..x.len() {
                        row += a[(i, j)] * x[j];
                    }
                    q += x[i] * (0.5 * row + b[i]);
                }
                q + k
            }
            Kind::Separable { components } => components
                .iter()
                .enumerate()
                .map(|(i, c)| c.value(&x[i..=i]))
                .sum(),
            Kind::Polynomial { terms, .. } => terms
                .iter()
                .map(|t| {
                    let mut m = t.coeff;
                    for (xi, p) in x.iter().zip(&t.powers) {
                        m *= xi.powi(*p as i32);
                    }
                    m
                })
                .sum(),
            Kind::Shifted { base, offset } => base.value(x) + offset,
            Kind::Cutoff { base, inner, outer } => {
                let chi = bump(norm(x), *inner, *outer).0;
                if chi == 0.0 {
                    0.0
                } else {
                    chi * base.value(x)
                }
            }
            Kind::Truncated { base, cap } => base.value(x).min(*cap),
            Kind::Smoothed {
                base,
                eps,
                axis_nodes,
                axis_weights,
            } => smoothed_reduce(base, *eps, axis_nodes, axis_weights, x, |b, y| b.value(y)),
        }
    }

    pub fn grad(&self, x: &[f64]) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.dim());
        match &self.kind {
            Kind::Quadratic { a, b, .. } => {
                let xv = DVector::from_column_slice(x);
                a * xv + b
            }
            Kind::Separable { components } => DVector::from_iterator(
                x.len(),
                components
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c.grad(&x[i..=i])[0]),
            ),
            Kind::Polynomial { dim, terms } => {
                let mut g = DVector::zeros(*dim);
                for t in terms {
                    for j in 0..*dim {
                        let pj = t.powers[j];
                        if pj == 0 {
                            continue;
                        }
                        let mut m = t.coeff * pj as f64;
                        for (i, (xi, p)) in x.iter().zip(&t.powers).enumerate() {
                            let e = if i == j { *p as i32 - 1 } else { *p as i32 };
                            m *= xi.powi(e);
                        }
                        g[j] += m;
                    }
                }
                g
            }
            Kind::Shifted { base, .. } => base.grad(x),
            Kind::Cutoff { base, inner, outer } => {
                let r = norm(x);
                let (chi, dchi, _) = bump(r, *inner, *outer);
                if chi == 0.0 && dchi == 0.0 {
                    return DVector::zeros(x.len());
                }
                let mut g = base.grad(x) * chi;
                if dchi != 0.0 {
                    let v = base.value(x);
                    for i in 0..x.len() {
                        g[i] += dchi * x[i] / r * v;
                    }
                }
                g
            }
            Kind::Truncated { base, cap } => {
                if base.value(x) < *cap {
                    base.grad(x)
                } else {
                    DVector::zeros(x.len())
                }
            }
            Kind::Smoothed {
                base,
                eps,
                axis_nodes,
                axis_weights,
            } => {
                let s = (-eps).exp();
                let dim = x.len();
                let mut g = DVector::zeros(dim);
                smoothed_each(base, *eps, axis_nodes, axis_weights, x, |b, y, w| {
                    g.axpy(w, &b.grad(y), 1.0);
                });
                g * s
            }
        }
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        debug_assert_eq!(x.len(), self.dim());
        match &self.kind {
            Kind::Quadratic { a, .. } => a.clone(),
            Kind::Separable { components } => {
                let mut h = DMatrix::zeros(x.len(), x.len());
                for (i, c) in components.iter().enumerate() {
                    h[(i, i)] = c.hessian(&x[i..=i])[(0, 0)];
                }
                h
            }
            Kind::Polynomial { dim, terms } => {
                let d = *dim;
                let mut h = DMatrix::zeros(d, d);
                for t in terms {
                    for j in 0..d {
                        for l in j..d {
                            let (pj, pl) = (t.powers[j] as i32, t.powers[l] as i32);
                            let factor = if j == l {
                                (pj * (pj - 1)) as f64
                            } else {
                                (pj * pl) as f64
                            };
                            if factor == 0.0 {
                                continue;
                            }
                            let mut m = t.coeff * factor;
                            for (i, (xi, p)) in x.iter().zip(&t.powers).enumerate() {
                                let mut e = *p as i32;
                                if i == j {
                                    e -= 1;
                                }
                                if i == l {
                                    e -= 1;
                                }
                                m *= xi.powi(e);
                            }
                            h[(j, l)] += m;
                            if j != l {
                                h[(l, j)] += m;
                            }
                        }
                    }
                }
                h
            }
            Kind::Shifted { base, .. } => base.hessian(x),
            Kind::Cutoff { base, inner, outer } => {
                let d = x.len();
                let r = norm(x);
                let (chi, dchi, ddchi) = bump(r, *inner, *outer);
                if chi == 0.0 && dchi == 0.0 && ddchi == 0.0 {
                    return DMatrix::zeros(d, d);
                }
                let mut h = base.hessian(x) * chi;
                if dchi != 0.0 || ddchi != 0.0 {
                    let v = base.value(x);
                    let g = base.grad(x);
                    for i in 0..d {
                        for j in 0..d {
                            let xi = x[i] / r;
                            let xj = x[j] / r;
                            // ∇χ⊗∇base + ∇base⊗∇χ + base·∇²χ
                            let mut add = dchi * (xi * g[j] + xj * g[i]);
                            let mut d2chi = ddchi * xi * xj;
                            d2chi += dchi * (((i == j) as u8 as f64) - xi * xj) / r;
                            add += v * d2chi;
                            h[(i, j)] += add;
                        }
                    }
                }
                h
            }
            Kind::Truncated { base, cap } => {
                if base.value(x) < *cap {
                    base.hessian(x)
                } else {
                    DMatrix::zeros(x.len(), x.len())
                }
            }
            Kind::Smoothed {
                base,
                eps,
                axis_nodes,
                axis_weights,
            } => {
                let s = (-eps).exp();
                let dim = x.len();
                let mut h = DMatrix::zeros(dim, dim);
                smoothed_each(base, *eps, axis_nodes, axis_weights, x, |b, y, w| {
                    h += b.hessian(y) * w;
                });
                h * (s * s)
            }
        }
    }

    /// Splits a separable-like potential into its 1D coordinate components
    /// (diagonal quadratics qualify). Offsets on the whole potential are
    /// attached to the first component.
    pub fn coordinate_components(&self) -> Result<Vec<Potential>> {
        match &self.kind {
            Kind::Separable { components } => Ok(components.clone()),
            Kind::Quadratic { a, b, k } => {
                for i in 0..a.nrows() {
                    for j in 0..a.ncols() {
                        if i != j && a[(i, j)] != 0.0 {
                            return Err(Error::invalid(
                                "potential",
                                "quadratic has off-diagonal coupling; not separable",
                            ));
                        }
                    }
                }
                Ok((0..a.nrows())
                    .map(|i| {
                        let kk = if i == 0 { *k } else { 0.0 };
                        Potential::quadratic(
                            DMatrix::from_element(1, 1, a[(i, i)]),
                            DVector::from_element(1, b[i]),
                            kk,
                        )
                        .expect("1x1 quadratic")
                    })
                    .collect())
            }
            Kind::Shifted { base, offset } => {
                let mut comps = base.coordinate_components()?;
                comps[0] = Potential::shifted(comps[0].clone(), *offset);
                Ok(comps)
            }
            _ => Err(Error::invalid(
                "potential",
                "not separable into coordinate components",
            )),
        }
    }

    /// True when the Hessian is constant in x (quadratic family), in which
    /// case semiconvexity estimation is exact.
    pub fn constant_hessian(&self) -> bool {
        match &self.kind {
            Kind::Quadratic { .. } => true,
            Kind::Shifted { base, .. } => base.constant_hessian(),
            Kind::Separable { components } => components.iter().all(|c| c.constant_hessian()),
            _ => false,
        }
    }

    /// The quadratic data (A, b) if e^{-V}γ is a (possibly unnormalized)
    /// Gaussian, i.e. the potential is quadratic under shifts/separability.
    pub fn gaussian_data(&self) -> Option<(DMatrix<f64>, DVector<f64>)> {
        match &self.kind {
            Kind::Quadratic { a, b, .. } => Some((a.clone(), b.clone())),
            Kind::Shifted { base, .. } => base.gaussian_data(),
            Kind::Separable { components } => {
                let d = components.len();
                let mut a = DMatrix::zeros(d, d);
                let mut b = DVector::zeros(d);
                for (i, c) in components.iter().enumerate() {
                    let (ai, bi) = c.gaussian_data()?;
                    a[(i, i)] = ai[(0, 0)];
                    b[i] = bi[0];
                }
                Some((a, b))
            }
            _ => None,
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Quintic smoothstep bump profile: (χ, χ', χ'') at radius r. χ ≡ 1 for
/// r ≤ inner, χ ≡ 0 for r ≥ outer, C² across both seams.
fn bump(r: f64, inner: f64, outer: f64) -> (f64, f64, f64) {
    if r <= inner {
        (1.0, 0.0, 0.0)
    } else if r >= outer {
        (0.0, 0.0, 0.0)
    } else {
        let w = outer - inner;
        let t = (r - inner) / w;
        let s = t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
        let ds = 30.0 * t * t * (1.0 + t * (-2.0 + t));
        let dds = t * (60.0 + t * (-180.0 + 120.0 * t));
        (1.0 - s, -ds / w, -dds / (w * w))
    }
}

/// Reduces g(base, s·x + t·y) over the tensor Gauss–Hermite rule in y.
fn smoothed_reduce(
    base: &Potential,
    eps: f64,
    axis_nodes: &[f64],
    axis_weights: &[f64],
    x: &[f64],
    g: impl Fn(&Potential, &[f64]) -> f64,
) -> f64 {
    let mut acc = quadrature::Accumulator::new();
    smoothed_each(base, eps, axis_nodes, axis_weights, x, |b, y, w| {
        acc.add(w * g(b, y));
    });
    acc.total()
}

/// Visits every tensor node y with its weight, passing s·x + t·y.
fn smoothed_each(
    base: &Potential,
    eps: f64,
    axis_nodes: &[f64],
    axis_weights: &[f64],
    x: &[f64],
    mut visit: impl FnMut(&Potential, &[f64], f64),
) {
    let dim = x.len();
    let order = axis_nodes.len();
    let s = (-eps).exp();
    let t = (1.0 - s * s).max(0.0).sqrt();
    let count = order.pow(dim as u32);
    let mut y = vec![0.0; dim];
    for idx in 0..count {
        let mut rem = idx;
        let mut w = 1.0;
        for axis in (0..dim).rev() {
            let i = rem % order;
            rem /= order;
            y[axis] = s * x[axis] + t * axis_nodes[i];
            w *= axis_weights[i];
        }
        visit(base, &y, w);
    }
}

/// Adds the offset log ∫ e^{-p} dγ so the weighted measure has unit mass.
/// Errors if the mass is non-finite or vanishes at the rule's resolution.
pub fn normalize(p: &Potential, rule: &QuadratureRule) -> Result<Potential> {
    if p.dim() != rule.dim() {
        return Err(Error::DimMismatch {
            expected: rule.dim(),
            got: p.dim(),
        });
    }
    let mass = quadrature::integrate(rule, |x| (-p.value(x)).exp())?;
    if !mass.is_finite() || mass <= 0.0 {
        return Err(Error::Normalization(format!(
            "mass of e^{{-V}} came out as {mass}"
        )));
    }
    Ok(Potential::shifted(p.clone(), mass.ln()))
}

/// Semiconvexity estimate: the smallest constant c ≥ 0 with ∇²V ≥ −c·Id
/// across the cloud. Exact (cloud-independent) for the quadratic family.
pub fn estimate_semiconvexity(p: &Potential, cloud: &SampleSet) -> Result<f64> {
    if p.dim() != cloud.dim() {
        return Err(Error::DimMismatch {
            expected: p.dim(),
            got: cloud.dim(),
        });
    }
    let min = if p.constant_hessian() {
        let origin = vec![0.0; p.dim()];
        linalg::min_eigenvalue(&p.hessian(&origin))
    } else {
        let mut min = f64::INFINITY;
        for x in cloud.iter() {
            min = min.min(linalg::min_eigenvalue(&p.hessian(x)));
        }
        min
    };
    Ok((-min).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{gauss_hermite, mc_sample};
    use approx::assert_abs_diff_eq;

    fn n02_potential() -> Potential {
        // e^{-W}γ = N(0,2) up to normalization: W = −x²/4 + const.
        Potential::quadratic(
            DMatrix::from_element(1, 1, -0.5),
            DVector::zeros(1),
            0.0,
        )
        .unwrap()
    }

    fn quartic() -> Potential {
        Potential::polynomial(
            1,
            vec![Term {
                powers: vec![4],
                coeff: 0.05,
            }],
        )
        .unwrap()
    }

    fn fd_grad(p: &Potential, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                (p.value(&xp) - p.value(&xm)) / (2.0 * h)
            })
            .collect()
    }

    fn fd_hessian(p: &Potential, x: &[f64], h: f64) -> DMatrix<f64> {
        let d = x.len();
        let mut m = DMatrix::zeros(d, d);
        for j in 0..d {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            let gp = p.grad(&xp);
            let gm = p.grad(&xm);
            for i in 0..d {
                m[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        m
    }

    #[test]
    fn quadratic_derivatives_match_finite_differences() {
        let a = DMatrix::from_row_slice(2, 2, &[0.8, -0.3, -0.3, 1.4]);
        let p = Potential::quadratic(a.clone(), DVector::from_vec(vec![0.2, -1.0]), 0.7).unwrap();
        let x = [0.4, -1.2];
        assert_abs_diff_eq!(
            p.value(&x),
            0.5 * (0.8 * 0.16 + 2.0 * (-0.3) * 0.4 * (-1.2) + 1.4 * 1.44)
                + 0.2 * 0.4
                + (-1.0) * (-1.2)
                + 0.7,
            epsilon = 1e-14
        );
        let g = p.grad(&x);
        for (i, gi) in fd_grad(&p, &x, 1e-6).iter().enumerate() {
            assert_abs_diff_eq!(g[i], *gi, epsilon = 1e-6);
        }
        let h = p.hessian(&x);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(h[(i, j)], a[(i, j)], epsilon = 0.0);
            }
        }
    }

    #[test]
    fn polynomial_derivatives_match_finite_differences() {
        let p = Potential::polynomial(
            2,
            vec![
                Term {
                    powers: vec![4, 0],
                    coeff: 0.05,
                },
                Term {
                    powers: vec![2, 2],
                    coeff: -0.1,
                },
                Term {
                    powers: vec![1, 3],
                    coeff: 0.02,
                },
            ],
        )
        .unwrap();
        let x = [0.9, -0.7];
        let g = p.grad(&x);
        for (i, gi) in fd_grad(&p, &x, 1e-5).iter().enumerate() {
            assert_abs_diff_eq!(g[i], *gi, epsilon = 1e-8);
        }
        let h = p.hessian(&x);
        let hfd = fd_hessian(&p, &x, 1e-5);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(h[(i, j)], hfd[(i, j)], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn polynomial_degree_guard() {
        let err = Potential::polynomial(
            1,
            vec![Term {
                powers: vec![9],
                coeff: 1.0,
            }],
        );
        assert!(err.is_err());
    }

    #[test]
    fn quadratic_requires_exact_symmetry() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1 + 1e-13, 1.0]);
        assert!(matches!(
            Potential::quadratic(a, DVector::zeros(2), 0.0),
            Err(Error::Asymmetric { .. })
        ));
    }

    #[test]
    fn normalize_matches_closed_forms() {
        let rule = gauss_hermite(1, 60).unwrap();
        // ∫ e^{x²/4} dγ = √2 ⟹ offset log √2.
        let w = normalize(&n02_potential(), &rule).unwrap();
        let offset = w.value(&[0.0]);
        assert_abs_diff_eq!(offset, 0.5 * 2.0f64.ln(), epsilon = 1e-10);

        // ∫ e^{-x²/2} dγ = 1/√2 ⟹ offset −log √2.
        let p = Potential::quadratic(DMatrix::from_element(1, 1, 1.0), DVector::zeros(1), 0.0)
            .unwrap();
        let n = normalize(&p, &rule).unwrap();
        assert_abs_diff_eq!(n.value(&[0.0]), -0.5 * 2.0f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn normalize_is_idempotent_and_leaves_derivatives() {
        let rule = gauss_hermite(1, 60).unwrap();
        let w = normalize(&n02_potential(), &rule).unwrap();
        let ww = normalize(&w, &rule).unwrap();
        assert!((ww.value(&[0.3]) - w.value(&[0.3])).abs() < 1e-10);
        let x = [1.7];
        assert_eq!(w.grad(&x)[0], n02_potential().grad(&x)[0]);
        assert_eq!(w.hessian(&x)[(0, 0)], n02_potential().hessian(&x)[(0, 0)]);
    }

    #[test]
    fn semiconvexity_exact_for_quadratics() {
        let cloud = mc_sample(1, 16, 1, 0).unwrap();
        let c = estimate_semiconvexity(&n02_potential(), &cloud).unwrap();
        assert_abs_diff_eq!(c, 0.5, epsilon = 0.0);

        let cloud2 = mc_sample(2, 16, 1, 0).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[-0.3, 0.0, 0.0, 0.7]);
        let p = Potential::quadratic(a, DVector::zeros(2), 0.0).unwrap();
        assert_abs_diff_eq!(
            estimate_semiconvexity(&p, &cloud2).unwrap(),
            0.3,
            epsilon = 1e-14
        );
    }

    #[test]
    fn semiconvexity_of_convex_quartic_is_zero() {
        let cloud = mc_sample(1, 512, 3, 0).unwrap();
        let c = estimate_semiconvexity(&quartic(), &cloud).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn cutoff_is_identity_inside_and_zero_outside() {
        let p = Potential::cutoff(quartic(), 2.0, 4.0).unwrap();
        assert_abs_diff_eq!(p.value(&[1.5]), quartic().value(&[1.5]), epsilon = 0.0);
        assert_eq!(p.value(&[4.5]), 0.0);
        assert_eq!(p.grad(&[4.5])[0], 0.0);
        // Transition region stays between the two.
        let mid = p.value(&[3.0]);
        assert!(mid > 0.0 && mid < quartic().value(&[3.0]));
    }

    #[test]
    fn cutoff_derivatives_match_finite_differences_across_seams() {
        let p = Potential::cutoff(quartic(), 2.0, 4.0).unwrap();
        for x in [1.9, 2.0 + 1e-7, 2.5, 3.3, 3.999, 4.2] {
            let g = p.grad(&[x]);
            let gfd = fd_grad(&p, &[x], 1e-6);
            assert_abs_diff_eq!(g[0], gfd[0], epsilon = 2e-5);
            let h = p.hessian(&[x]);
            let hfd = fd_hessian(&p, &[x], 1e-6);
            assert_abs_diff_eq!(h[(0, 0)], hfd[(0, 0)], epsilon = 2e-4);
        }
        // 2D bump: gradient of χ(|x|)·V matches finite differences.
        let base2 = Potential::quadratic(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, -0.2]),
            DVector::from_vec(vec![0.3, 0.0]),
            0.1,
        )
        .unwrap();
        let p2 = Potential::cutoff(base2, 1.0, 3.0).unwrap();
        for x in [[0.5, 0.4], [1.4, -1.1], [2.0, 1.6], [3.0, 3.0]] {
            let g = p2.grad(&x);
            let gfd = fd_grad(&p2, &x, 1e-6);
            for i in 0..2 {
                assert_abs_diff_eq!(g[i], gfd[i], epsilon = 3e-5);
            }
        }
    }

    #[test]
    fn bump_slope_is_bounded_by_one_over_width_two() {
        // The quintic profile has max |s'| = 15/8 at the midpoint; over a
        // width-2 transition the radial slope stays ≤ 15/16 < 1.
        let maxslope = (0..=1000)
            .map(|i| {
                let r = 2.0 + 2.0 * i as f64 / 1000.0;
                bump(r, 2.0, 4.0).1.abs()
            })
            .fold(0.0f64, f64::max);
        assert!(maxslope <= 15.0 / 16.0 + 1e-12, "max slope {maxslope}");
    }

    #[test]
    fn truncation_caps_values() {
        let p = Potential::truncated(quartic(), 1.0);
        assert_eq!(p.value(&[0.5]), quartic().value(&[0.5]));
        assert_eq!(p.value(&[3.0]), 1.0);
        assert_eq!(p.grad(&[3.0])[0], 0.0);
        assert_eq!(p.hessian(&[3.0])[(0, 0)], 0.0);
    }

    #[test]
    fn separable_components_roundtrip() {
        let sep = Potential::separable(vec![n02_potential(), quartic()]).unwrap();
        assert_eq!(sep.dim(), 2);
        let x = [0.8, -0.6];
        assert_abs_diff_eq!(
            sep.value(&x),
            n02_potential().value(&[0.8]) + quartic().value(&[-0.6]),
            epsilon = 1e-15
        );
        let comps = sep.coordinate_components().unwrap();
        assert_eq!(comps.len(), 2);

        // Diagonal quadratics split; coupled ones refuse.
        let diag = Potential::quadratic(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -0.2]),
            DVector::from_vec(vec![0.1, 0.2]),
            0.3,
        )
        .unwrap();
        let comps = diag.coordinate_components().unwrap();
        assert_abs_diff_eq!(
            comps[0].value(&[2.0]) + comps[1].value(&[-1.0]),
            diag.value(&[2.0, -1.0]),
            epsilon = 1e-15
        );
        let coupled = Potential::quadratic(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, -0.2]),
            DVector::zeros(2),
            0.0,
        )
        .unwrap();
        assert!(coupled.coordinate_components().is_err());
    }

    #[test]
    fn gaussian_data_recovers_quadratic_family() {
        let rule = gauss_hermite(1, 40).unwrap();
        let w = normalize(&n02_potential(), &rule).unwrap();
        let (a, b) = w.gaussian_data().unwrap();
        assert_eq!(a[(0, 0)], -0.5);
        assert_eq!(b[0], 0.0);
        assert!(quartic().gaussian_data().is_none());
    }
}
