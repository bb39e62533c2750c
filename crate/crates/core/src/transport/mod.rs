//! Transport maps T pushing e^{-V}γ forward to e^{-W}γ, written throughout
//! as T(x) = x + ∇φ(x) with φ the (relative) Brenier potential. The Jacobian
//! ∇T = I + ∇²φ is symmetric positive semidefinite for an optimal map; the
//! accessors here enforce that up to backend-specific tolerances.
//!
//! Backends:
//! - `Identity`: V = W.
//! - `Linear`: closed form between nondegenerate Gaussian pairs.
//! - `Quantile1D`: monotone rearrangement via CDF inversion in one dimension.
//! - `EntropicGrid`: Sinkhorn iteration on a tensor grid with barycentric
//!   projection, for low-dimensional non-Gaussian pairs.

mod entropic;
mod gaussian;
mod quantile;

pub use entropic::{default_schedule, solve_entropic_grid, EntropicParams, GridMap, GridSpec};
pub use gaussian::solve_gaussian_closed_form;
pub use quantile::{solve_quantile_1d, QuantileMap, QuantileParams};

use crate::error::Error;
use crate::fields::{FieldExpr, ScalarField};
use crate::linalg;
use crate::potentials::Potential;
use crate::quadrature::{self, QuadratureRule};
use crate::Result;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Finite-difference step for third derivatives of tabulated 1D maps.
pub const THIRD_DERIVATIVE_STEP: f64 = 1e-3;

/// Eigenvalue floor below which a map Jacobian is reported as a convexity
/// violation.
pub const JACOBIAN_PSD_FLOOR: f64 = -1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransportMap {
    dim: usize,
    source: Potential,
    target: Potential,
    backend: Backend,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Backend {
    Identity,
    Linear {
        matrix: DMatrix<f64>,
        shift: DVector<f64>,
    },
    Quantile1D(QuantileMap),
    EntropicGrid(GridMap),
}

impl TransportMap {
    pub(crate) fn new(dim: usize, source: Potential, target: Potential, backend: Backend) -> Self {
        TransportMap {
            dim,
            source,
            target,
            backend,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source(&self) -> &Potential {
        &self.source
    }

    pub fn target(&self) -> &Potential {
        &self.target
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn backend_name(&self) -> &'static str {
        match &self.backend {
            Backend::Identity => "identity",
            Backend::Linear { .. } => "linear",
            Backend::Quantile1D(_) => "quantile1d",
            Backend::EntropicGrid(_) => "entropic-grid",
        }
    }

    /// True for backends whose Jacobian is an analytic formula rather than a
    /// finite difference.
    pub fn analytic_jacobian(&self) -> bool {
        !matches!(self.backend, Backend::EntropicGrid(_))
    }

    /// True for backends supporting third derivatives of φ.
    pub fn supports_third_derivative(&self) -> bool {
        !matches!(self.backend, Backend::EntropicGrid(_))
    }
}

/// T(x).
pub fn map_value(map: &TransportMap, x: &[f64]) -> Result<DVector<f64>> {
    check_dim(map, x)?;
    match &map.backend {
        Backend::Identity => Ok(DVector::from_column_slice(x)),
        Backend::Linear { matrix, shift } => {
            Ok(matrix * DVector::from_column_slice(x) + shift)
        }
        Backend::Quantile1D(q) => Ok(DVector::from_element(1, q.value(x[0]))),
        Backend::EntropicGrid(g) => Ok(g.value(x)),
    }
}

/// ∇φ(x) = T(x) − x.
pub fn map_phi_grad(map: &TransportMap, x: &[f64]) -> Result<DVector<f64>> {
    let mut t = map_value(map, x)?;
    for i in 0..x.len() {
        t[i] -= x[i];
    }
    Ok(t)
}

/// ∇T(x) = I + ∇²φ(x), symmetrized, with a positive-semidefiniteness check
/// (smallest eigenvalue ≥ −1e-6, else a convexity-violation error).
pub fn map_jacobian(map: &TransportMap, x: &[f64]) -> Result<DMatrix<f64>> {
    let j = jacobian_unchecked(map, x)?;
    let sym = 0.5 * (&j + j.transpose());
    let min_eig = linalg::min_eigenvalue(&sym);
    if min_eig < JACOBIAN_PSD_FLOOR {
        return Err(Error::ConvexityViolation { min_eig });
    }
    Ok(sym)
}

/// Maximum |J_ij − J_ji| of the raw (pre-symmetrization) Jacobian;
/// identically zero for analytic backends.
pub fn map_jacobian_asymmetry(map: &TransportMap, x: &[f64]) -> Result<f64> {
    let j = jacobian_unchecked(map, x)?;
    Ok(linalg::asymmetry(&j))
}

fn jacobian_unchecked(map: &TransportMap, x: &[f64]) -> Result<DMatrix<f64>> {
    check_dim(map, x)?;
    match &map.backend {
        Backend::Identity => Ok(DMatrix::identity(map.dim, map.dim)),
        Backend::Linear { matrix, .. } => Ok(matrix.clone()),
        Backend::Quantile1D(q) => {
            let d = q.derivative(&map.source, &map.target, x[0]);
            if !d.is_finite() {
                return Err(Error::NonFinite {
                    context: "quantile density-ratio derivative",
                    value: d,
                });
            }
            Ok(DMatrix::from_element(1, 1, d))
        }
        Backend::EntropicGrid(g) => g.jacobian_fd(x),
    }
}

/// Directional derivative of the Hessian: D_a ∇²φ(x), an d×d matrix.
/// Zero for affine backends; a central difference of the analytic Jacobian
/// (step 1e-3 per unit of |a|) for the quantile backend. The entropic
/// backend does not support third derivatives.
pub fn map_third_derivative(
    map: &TransportMap,
    x: &[f64],
    a: &[f64],
) -> Result<DMatrix<f64>> {
    check_dim(map, x)?;
    if a.len() != map.dim {
        return Err(Error::DimMismatch {
            expected: map.dim,
            got: a.len(),
        });
    }
    match &map.backend {
        Backend::Identity | Backend::Linear { .. } => Ok(DMatrix::zeros(map.dim, map.dim)),
        Backend::Quantile1D(q) => {
            let h = THIRD_DERIVATIVE_STEP;
            let dp = q.derivative(&map.source, &map.target, x[0] + h);
            let dm = q.derivative(&map.source, &map.target, x[0] - h);
            let ddd = (dp - dm) / (2.0 * h);
            Ok(DMatrix::from_element(1, 1, a[0] * ddd))
        }
        Backend::EntropicGrid(_) => Err(Error::Unsupported {
            backend: "entropic-grid",
            operation: "third derivative",
        }),
    }
}

fn check_dim(map: &TransportMap, x: &[f64]) -> Result<()> {
    if x.len() != map.dim {
        return Err(Error::DimMismatch {
            expected: map.dim,
            got: x.len(),
        });
    }
    Ok(())
}

/// One battery entry of a pushforward check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PushforwardEntry {
    pub observable: String,
    pub through_map: f64,
    pub direct: f64,
}

/// Result of comparing ∫f(T(x)) e^{-V}dγ with ∫f e^{-W}dγ over the
/// observable battery.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PushforwardCheck {
    pub max_abs_discrepancy: f64,
    pub entries: Vec<PushforwardEntry>,
}

/// Observable battery: 1, the coordinates, the second moments x_i x_j
/// (i ≤ j), |x|², and three fixed cosine waves.
pub fn observable_battery(dim: usize) -> Vec<(String, FieldExpr)> {
    let mut battery: Vec<(String, FieldExpr)> = vec![("1".into(), FieldExpr::constant(dim, 1.0))];
    for i in 0..dim {
        battery.push((format!("x{}", i + 1), FieldExpr::coordinate(dim, i)));
    }
    for i in 0..dim {
        for j in i..dim {
            battery.push((
                format!("x{}*x{}", i + 1, j + 1),
                FieldExpr::coordinate_product(dim, i, j),
            ));
        }
    }
    battery.push(("|x|^2".into(), FieldExpr::norm_sq(dim)));
    let scale = 1.0 / (dim as f64).sqrt();
    let e1 = DVector::from_fn(dim, |i, _| if i == 0 { 1.0 } else { 0.0 });
    let ones = DVector::from_element(dim, scale);
    let alt = DVector::from_fn(dim, |i, _| if i % 2 == 0 { scale } else { -scale });
    for (name, u) in [("cos(u1.x)", e1), ("cos(u2.x)", ones), ("cos(u3.x)", alt)] {
        battery.push((name.into(), FieldExpr::cosine(u)));
    }
    battery
}

/// Integrates every battery observable through the map and directly against
/// the target, normalizing both weighted measures with the same rule, and
/// reports the worst absolute discrepancy.
pub fn pushforward_check(map: &TransportMap, rule: &QuadratureRule) -> Result<PushforwardCheck> {
    if rule.dim() != map.dim {
        return Err(Error::DimMismatch {
            expected: map.dim,
            got: rule.dim(),
        });
    }
    let z_source = quadrature::integrate(rule, |x| (-map.source.value(x)).exp())?;
    let z_target = quadrature::integrate(rule, |x| (-map.target.value(x)).exp())?;
    if z_source <= 0.0 || z_target <= 0.0 {
        return Err(Error::Normalization(
            "pushforward check needs positive source/target masses".into(),
        ));
    }

    let battery = observable_battery(map.dim);
    let mut entries = Vec::with_capacity(battery.len());
    let mut max_abs: f64 = 0.0;
    for (name, f) in battery {
        let mut failure: Option<Error> = None;
        let through = quadrature::integrate(rule, |x| {
            match map_value(map, x) {
                Ok(t) => f.value(t.as_slice()) * (-map.source.value(x)).exp(),
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        let through = through? / z_source;
        let direct =
            quadrature::integrate(rule, |x| f.value(x) * (-map.target.value(x)).exp())? / z_target;
        max_abs = max_abs.max((through - direct).abs());
        entries.push(PushforwardEntry {
            observable: name,
            through_map: through,
            direct,
        });
    }
    Ok(PushforwardCheck {
        max_abs_discrepancy: max_abs,
        entries,
    })
}
