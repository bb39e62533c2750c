//! Regularization and projection machinery for weighted Gaussian measures:
//! bump-cutoff smoothing of potentials, capped truncation, conditional
//! projections of separable quadratic targets onto leading coordinates, and
//! the monotone tower of per-level squared transport costs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::functionals;
use crate::potentials::{normalize, Potential};
use crate::quadrature::{self, QuadratureRule};
use crate::transport::{self, QuantileParams, TransportMap};
use crate::Result;

/// Largest ambient dimension the tower machinery accepts.
pub const MAX_TOWER_DIM: usize = 12;

/// Smooths V by the Mehler kernel at time 1/n, multiplies by a C² bump that
/// is 1 on |x| ≤ n and 0 on |x| ≥ n+2, and normalizes. The smoothing fiber
/// uses a per-axis Gauss–Hermite rule of the ambient rule's order.
pub fn cutoff_regularize(v: &Potential, n: usize, rule: &QuadratureRule) -> Result<Potential> {
    if n == 0 {
        return Err(Error::invalid("n", "cutoff level must be >= 1"));
    }
    if v.dim() != rule.dim() {
        return Err(Error::DimMismatch {
            expected: rule.dim(),
            got: v.dim(),
        });
    }
    let smoothed = Potential::smoothed(v.clone(), 1.0 / n as f64, rule.order())?;
    let bumped = Potential::cutoff(smoothed, n as f64, n as f64 + 2.0)?;
    normalize(&bumped, rule)
}

/// Caps V at n pointwise and renormalizes. Returns the renormalized
/// potential together with the pre-normalization mass a_n = ∫e^{-V∧n}dγ,
/// which decreases toward ∫e^{-V}dγ as the cap rises.
pub fn truncate(v: &Potential, n: usize, rule: &QuadratureRule) -> Result<(Potential, f64)> {
    if n == 0 {
        return Err(Error::invalid("n", "truncation cap must be >= 1"));
    }
    if v.dim() != rule.dim() {
        return Err(Error::DimMismatch {
            expected: rule.dim(),
            got: v.dim(),
        });
    }
    let capped = Potential::truncated(v.clone(), n as f64);
    let mass = quadrature::integrate_weighted(rule, &capped, |_| 1.0)?;
    let normalized = normalize(&capped, rule)?;
    Ok((normalized, mass))
}

/// Diagonal quadratic target data: the k-th coordinate carries λ_k x_k²
/// with 1 + 2λ_k > 0, so every marginal stays integrable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparableQuadraticSpec {
    lambdas: Vec<f64>,
}

impl SeparableQuadraticSpec {
    pub fn new(lambdas: Vec<f64>) -> Result<SeparableQuadraticSpec> {
        if lambdas.is_empty() {
            return Err(Error::invalid("lambdas", "need at least one coefficient"));
        }
        if lambdas.len() > MAX_TOWER_DIM {
            return Err(Error::invalid(
                "lambdas",
                format!("ambient dimension {} exceeds {MAX_TOWER_DIM}", lambdas.len()),
            ));
        }
        for (k, l) in lambdas.iter().enumerate() {
            if !l.is_finite() || 1.0 + 2.0 * l <= 0.0 {
                return Err(Error::invalid(
                    "lambdas",
                    format!("need 1 + 2λ > 0 at index {k}, got λ = {l}"),
                ));
            }
        }
        Ok(SeparableQuadraticSpec { lambdas })
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Mass of the projected-out tail: Π_{k>n} (1+2λ_k)^{-1/2}. Empty
    /// product 1 at n = len.
    pub fn alpha(&self, n: usize) -> f64 {
        assert!(n <= self.lambdas.len());
        self.lambdas[n..]
            .iter()
            .map(|l| 1.0 / (1.0 + 2.0 * l).sqrt())
            .product()
    }

    /// The normalized potential on all coordinates.
    pub fn full_potential(&self) -> Potential {
        let (p, _) = conditional_projection(self, self.lambdas.len())
            .expect("projection at the full level is always valid");
        p
    }
}

/// Projects the spec's density onto the first n coordinates by integrating
/// the rest out. Returns the normalized level potential
/// W_n(x) = Σ_{k≤n} λ_k x_k² − ½ Σ_{k≤n} ln(1+2λ_k) and the tail mass α_n.
pub fn conditional_projection(
    spec: &SeparableQuadraticSpec,
    n: usize,
) -> Result<(Potential, f64)> {
    if n == 0 || n > spec.len() {
        return Err(Error::invalid(
            "n",
            format!("projection level must be in 1..={}, got {n}", spec.len()),
        ));
    }
    let components = spec.lambdas[..n]
        .iter()
        .map(|l| {
            Potential::quadratic(
                DMatrix::from_element(1, 1, 2.0 * l),
                DVector::zeros(1),
                -0.5 * (1.0 + 2.0 * l).ln(),
            )
            .expect("1x1 quadratic")
        })
        .collect();
    Ok((Potential::separable(components)?, spec.alpha(n)))
}

/// One rung of the projection tower.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TowerLevel {
    pub n: usize,
    pub v_n: Potential,
    pub w_n: Potential,
    /// Mass of the target components the level projects out; 1 when the
    /// caller's components are individually normalized.
    pub alpha_n: f64,
    pub w2_sq: f64,
}

/// Exact transport for Gaussian component pairs, table solve otherwise.
fn solve_axis(v: &Potential, w: &Potential, params: &QuantileParams) -> Result<TransportMap> {
    match transport::solve_gaussian_closed_form(v, w) {
        Ok(map) => Ok(map),
        Err(_) => transport::solve_quantile_1d(v, w, params),
    }
}

/// Builds the tower of squared transport costs between the conditional
/// projections of two separable measures. Level n holds the normalized
/// prefix potentials on the first n coordinates and the cost
/// W₂²(e^{-V_n}γ_n, e^{-W_n}γ_n), which is the prefix sum of the
/// per-coordinate 1D costs, so the sequence never decreases. The final
/// level is the full-space cost.
pub fn tower_w2_sequence(
    v: &Potential,
    w: &Potential,
    params: &QuantileParams,
    axis_rule: &QuadratureRule,
) -> Result<Vec<TowerLevel>> {
    if axis_rule.dim() != 1 {
        return Err(Error::DimMismatch {
            expected: 1,
            got: axis_rule.dim(),
        });
    }
    if v.dim() != w.dim() {
        return Err(Error::DimMismatch {
            expected: v.dim(),
            got: w.dim(),
        });
    }
    if v.dim() > MAX_TOWER_DIM {
        return Err(Error::invalid(
            "dim",
            format!("ambient dimension {} exceeds {MAX_TOWER_DIM}", v.dim()),
        ));
    }
    let v_parts = v.coordinate_components()?;
    let w_parts = w.coordinate_components()?;

    let dim = v_parts.len();
    let mut normalized_v = Vec::with_capacity(dim);
    let mut normalized_w = Vec::with_capacity(dim);
    let mut target_masses = Vec::with_capacity(dim);
    let mut costs = Vec::with_capacity(dim);
    for k in 0..dim {
        target_masses.push(quadrature::integrate_weighted(
            axis_rule,
            &w_parts[k],
            |_| 1.0,
        )?);
        let vn = normalize(&v_parts[k], axis_rule)?;
        let wn = normalize(&w_parts[k], axis_rule)?;
        let map = solve_axis(&vn, &wn, params)?;
        costs.push(functionals::w2_cost_from_map(&map, &vn, axis_rule)?);
        normalized_v.push(vn);
        normalized_w.push(wn);
    }

    let mut levels = Vec::with_capacity(dim);
    let mut running = 0.0;
    for n in 1..=dim {
        running += costs[n - 1];
        let alpha_n: f64 = target_masses[n..].iter().product();
        levels.push(TowerLevel {
            n,
            v_n: Potential::separable(normalized_v[..n].to_vec())?,
            w_n: Potential::separable(normalized_w[..n].to_vec())?,
            alpha_n,
            w2_sq: running,
        });
    }
    Ok(levels)
}
