//! Integral inequalities and identities between weighted Gaussian measures,
//! checked numerically and reported with itemized bookkeeping.
//!
//! Every check produces an [`InequalityReport`]. The two sides of the
//! relation are sums of [`ReportItem`]s, each a coefficient times a quadrature
//! integral carried with its truncation estimate; `lhs` and `rhs` are the
//! plain left-to-right folds of those contributions, so the items re-sum to
//! the recorded sides exactly. Relations whose sides are not additive (L^p
//! norms, products, maxima over a battery) use a single item per side whose
//! integral evaluates the fully assembled expression, which keeps both the
//! re-sum property and an honest truncation estimate; the building blocks go
//! into `aux`.
//!
//! The verdict tolerance adapts to quadrature quality: it is the floor for
//! the check (1e-4 for the entropy balance identity, 1e-6 otherwise, the
//! caller's tolerance for residual sups) or 1e3 times the worst scaled
//! truncation among the items, whichever is larger.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::fields::{FieldExpr, ScalarField};
use crate::functionals::{self, functional_value, FunctionalValue};
use crate::linalg;
use crate::potentials::Potential;
use crate::quadrature::{self, gauss_legendre_01, Accumulator, QuadratureRule};
use crate::transport::{self, TransportMap};
use crate::Result;

/// Floor for inequality tolerances.
pub const TOLERANCE_FLOOR: f64 = 1e-6;
/// Floor for the entropy balance identity, whose two sides are assembled
/// from integrals of very different character.
pub const IDENTITY_FLOOR: f64 = 1e-4;
/// Multiplier turning the worst itemized truncation into a tolerance.
pub const TRUNCATION_FACTOR: f64 = 1e3;
/// Nodes for the line integral in the entropy balance remainder.
pub const REMAINDER_NODES: usize = 32;
/// Below this the two target potentials are treated as coincident and the
/// map stability report gains the sharper same-target refinement.
pub const COINCIDENT_TARGET_THRESHOLD: f64 = 1e-12;
/// Slack allowed when probing curvature hypotheses at quadrature nodes.
pub const CURVATURE_PROBE_SLACK: f64 = 1e-8;

/// Which side of the relation an item contributes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Lhs,
    Rhs,
}

/// Sense of the relation between the assembled sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Claim: lhs ≥ rhs. Slack is lhs − rhs.
    GeqRhs,
    /// Claim: lhs ≤ rhs. Slack is rhs − lhs.
    LeqRhs,
    /// Claim: lhs = rhs. Slack is |lhs − rhs|.
    Identity,
}

/// Outcome of comparing the slack against the tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    Violated,
    IdentityOk,
    IdentityBroken,
}

/// One coefficient-times-integral contribution to a side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportItem {
    pub side: Side,
    pub coefficient: f64,
    pub integral: FunctionalValue,
}

impl ReportItem {
    fn new(side: Side, coefficient: f64, integral: FunctionalValue) -> ReportItem {
        ReportItem {
            side,
            coefficient,
            integral,
        }
    }

    pub fn contribution(&self) -> f64 {
        self.coefficient * self.integral.value
    }

    pub fn scaled_truncation(&self) -> f64 {
        self.coefficient.abs() * self.integral.truncation
    }
}

/// Left-to-right fold of the contributions on one side. The report's `lhs`
/// and `rhs` are exactly these folds over its `items`.
pub fn side_sum(items: &[ReportItem], side: Side) -> f64 {
    items
        .iter()
        .filter(|item| item.side == side)
        .fold(0.0, |sum, item| sum + item.contribution())
}

/// Result of one verified relation, with enough bookkeeping to audit it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub direction: Direction,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub items: Vec<ReportItem>,
    /// Secondary scalars: refinement sides, L^p exponents, per-observable
    /// slacks, and similar diagnostics keyed by stable names.
    pub aux: BTreeMap<String, f64>,
}

impl InequalityReport {
    fn assemble(
        name: &str,
        direction: Direction,
        floor: f64,
        items: Vec<ReportItem>,
        aux: BTreeMap<String, f64>,
    ) -> InequalityReport {
        let lhs = side_sum(&items, Side::Lhs);
        let rhs = side_sum(&items, Side::Rhs);
        let worst = items
            .iter()
            .map(ReportItem::scaled_truncation)
            .fold(0.0, f64::max);
        let tolerance = floor.max(TRUNCATION_FACTOR * worst);
        let slack = match direction {
            Direction::GeqRhs => lhs - rhs,
            Direction::LeqRhs => rhs - lhs,
            Direction::Identity => (lhs - rhs).abs(),
        };
        let verdict = match direction {
            Direction::Identity => {
                if slack <= tolerance {
                    Verdict::IdentityOk
                } else {
                    Verdict::IdentityBroken
                }
            }
            _ => {
                if slack >= -tolerance {
                    Verdict::Holds
                } else {
                    Verdict::Violated
                }
            }
        };
        InequalityReport {
            name: name.to_owned(),
            direction,
            lhs,
            rhs,
            slack,
            tolerance,
            verdict,
            items,
            aux,
        }
    }

    pub fn holds(&self) -> bool {
        matches!(self.verdict, Verdict::Holds | Verdict::IdentityOk)
    }
}

/// ∫ f(x) e^{-V(x)} dγ with a fallible integrand; map probes inside `f` can
/// report convexity or domain failures and they propagate.
pub fn weighted_map_integral(
    rule: &QuadratureRule,
    v: &Potential,
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<f64> {
    if v.dim() != rule.dim() {
        return Err(Error::DimMismatch {
            expected: rule.dim(),
            got: v.dim(),
        });
    }
    let mut x = vec![0.0; rule.dim()];
    let mut acc = Accumulator::new();
    for i in 0..rule.len() {
        let w = rule.node(i, &mut x);
        let term = w * (-v.value(&x)).exp() * f(&x)?;
        if !term.is_finite() {
            return Err(Error::NonFiniteNode {
                node: i,
                value: term,
            });
        }
        acc.add(term);
    }
    Ok(acc.total())
}

fn require_same_dim(map: &TransportMap, rule: &QuadratureRule) -> Result<()> {
    if map.dim() != rule.dim() {
        return Err(Error::DimMismatch {
            expected: map.dim(),
            got: rule.dim(),
        });
    }
    Ok(())
}

/// ∇²φ(x) = ∇T(x) − I.
fn hessian_phi(map: &TransportMap, x: &[f64]) -> Result<DMatrix<f64>> {
    let mut jac = transport::map_jacobian(map, x)?;
    for i in 0..jac.nrows() {
        jac[(i, i)] -= 1.0;
    }
    Ok(jac)
}

/// Requires 0 ≤ c < 1 and checks ∇²W ≥ −(c + slack)·I at the rule's nodes
/// (a single probe suffices when the Hessian is constant).
fn check_semiconvexity(w: &Potential, c: f64, rule: &QuadratureRule) -> Result<()> {
    if !(0.0..1.0).contains(&c) {
        return Err(Error::invalid(
            "c",
            format!("semiconvexity constant must satisfy 0 <= c < 1, got {c}"),
        ));
    }
    let floor = -(c + CURVATURE_PROBE_SLACK);
    if w.constant_hessian() {
        let origin = vec![0.0; w.dim()];
        return check_hessian_floor(w, &origin, floor);
    }
    let mut x = vec![0.0; rule.dim()];
    for i in 0..rule.len() {
        rule.node(i, &mut x);
        check_hessian_floor(w, &x, floor)?;
    }
    Ok(())
}

fn check_hessian_floor(w: &Potential, x: &[f64], floor: f64) -> Result<()> {
    let min = linalg::min_eigenvalue(&w.hessian(x));
    if min < floor {
        return Err(Error::invalid(
            "c",
            format!("target Hessian eigenvalue {min:.6e} at a probe point falls below {floor:.6e}"),
        ));
    }
    Ok(())
}

/// Requires c > 0 and checks I + ∇²W ≥ (c − slack)·I at the rule's nodes.
fn check_uniform_convexity(w: &Potential, c: f64, rule: &QuadratureRule) -> Result<()> {
    if !(c > 0.0) {
        return Err(Error::invalid(
            "c",
            format!("uniform convexity constant must be positive, got {c}"),
        ));
    }
    let floor = c - CURVATURE_PROBE_SLACK;
    let probe = |x: &[f64]| -> Result<()> {
        let min = 1.0 + linalg::min_eigenvalue(&w.hessian(x));
        if min < floor {
            return Err(Error::invalid(
                "c",
                format!("I + target Hessian has eigenvalue {min:.6e} below the claimed bound {c}"),
            ));
        }
        Ok(())
    };
    if w.constant_hessian() {
        return probe(&vec![0.0; w.dim()]);
    }
    let mut x = vec![0.0; rule.dim()];
    for i in 0..rule.len() {
        rule.node(i, &mut x);
        probe(&x)?;
    }
    Ok(())
}

/// Requires 1 ≤ p < 2 and returns the dual exponent q = 2p/(2−p).
fn require_lp_exponent(p: f64) -> Result<f64> {
    if !(1.0..2.0).contains(&p) {
        return Err(Error::invalid(
            "p",
            format!("Lebesgue exponent must satisfy 1 <= p < 2, got {p}"),
        ));
    }
    Ok(2.0 * p / (2.0 - p))
}

/// Checks the exact balance between the entropy gap of two transported pairs
/// and its expansion into a cross term, a relative Jacobian log-determinant,
/// and a second order line-integral remainder, all weighted by the second
/// pair's source measure e^{-V₂}γ:
///
///   ∫(V₁−V₂)e^{-V₂}dγ − ∫(W₁−W₂)e^{-W₂}dγ
///     = ∫⟨T₁−T₂, ∇(W₁−W₂)∘T₂⟩e^{-V₂}dγ
///       − ∫ ln det₂(J₂^{-1/2} J₁ J₂^{-1/2}) e^{-V₂}dγ
///       + ∫₀¹(1−t)∫ (|u|² + ⟨∇²W₁(Λ_t)u, u⟩) e^{-V₂}dγ dt,
///
/// with u = T₁−T₂ and Λ_t the segment from T₂ to T₁.
pub fn verify_entropy_balance(
    map1: &TransportMap,
    map2: &TransportMap,
    rule: &QuadratureRule,
) -> Result<InequalityReport> {
    require_same_dim(map1, rule)?;
    require_same_dim(map2, rule)?;
    let (v1, w1) = (map1.source(), map1.target());
    let (v2, w2) = (map2.source(), map2.target());
    let line = gauss_legendre_01(REMAINDER_NODES)?;

    let items = vec![
        ReportItem::new(
            Side::Lhs,
            1.0,
            functional_value("entropy-gap-sources", rule, |r| {
                quadrature::integrate_weighted(r, v2, |x| v1.value(x) - v2.value(x))
            })?,
        ),
        ReportItem::new(
            Side::Lhs,
            -1.0,
            functional_value("entropy-gap-targets", rule, |r| {
                quadrature::integrate_weighted(r, w2, |x| w1.value(x) - w2.value(x))
            })?,
        ),
        ReportItem::new(
            Side::Rhs,
            1.0,
            functional_value("target-mismatch-cross", rule, |r| {
                weighted_map_integral(r, v2, |x| {
                    let t1 = transport::map_value(map1, x)?;
                    let t2 = transport::map_value(map2, x)?;
                    let grad_gap = w1.grad(t2.as_slice()) - w2.grad(t2.as_slice());
                    Ok((t1 - t2).dot(&grad_gap))
                })
            })?,
        ),
        ReportItem::new(
            Side::Rhs,
            -1.0,
            functional_value("jacobian-ratio-logdet", rule, |r| {
                weighted_map_integral(r, v2, |x| {
                    let j1 = transport::map_jacobian(map1, x)?;
                    let j2 = transport::map_jacobian(map2, x)?;
                    let root_inv = linalg::sym_inv_sqrt(&j2)?;
                    functionals::log_det2(&(&root_inv * j1 * &root_inv))
                })
            })?,
        ),
        ReportItem::new(
            Side::Rhs,
            1.0,
            functional_value("taylor-remainder", rule, |r| {
                weighted_map_integral(r, v2, |x| {
                    let t1 = transport::map_value(map1, x)?;
                    let t2 = transport::map_value(map2, x)?;
                    let u = &t1 - &t2;
                    let base = u.norm_squared();
                    let mut sum = 0.0;
                    for &(t, weight) in &line {
                        let mid = &t2 * (1.0 - t) + &t1 * t;
                        let hess = w1.hessian(mid.as_slice());
                        sum += weight * (1.0 - t) * (base + linalg::quad_form(&hess, &u));
                    }
                    Ok(sum)
                })
            })?,
        ),
    ];
    Ok(InequalityReport::assemble(
        "entropy-balance",
        Direction::Identity,
        IDENTITY_FLOOR,
        items,
        BTreeMap::new(),
    ))
}

/// Checks that the squared L²(e^{-V₂}γ) distance between two transport maps
/// is controlled by the entropy gap of the sources plus the Fisher-type gap
/// of the targets:
///
///   ∫|T₁−T₂|²e^{-V₂}dγ ≤ (4/c)·[∫(V₁−V₂)e^{-V₂}dγ − ∫(W₁−W₂)e^{-W₂}dγ]
///                         + (4/c²)·∫|∇(W₁−W₂)|²e^{-W₂}dγ,
///
/// under I + ∇²W₁ ≥ c·I with c > 0. When the two targets coincide the
/// sharper bound (c/2)·∫|T₁−T₂|²e^{-V₂}dγ ≤ ∫(V₁−V₂)e^{-V₂}dγ applies and
/// its sides land in `aux` under `refinement-*` keys.
pub fn verify_map_stability(
    map1: &TransportMap,
    map2: &TransportMap,
    c: f64,
    rule: &QuadratureRule,
) -> Result<InequalityReport> {
    require_same_dim(map1, rule)?;
    require_same_dim(map2, rule)?;
    check_uniform_convexity(map1.target(), c, rule)?;
    let (v1, w1) = (map1.source(), map1.target());
    let (v2, w2) = (map2.source(), map2.target());

    let gap_sources = functional_value("entropy-gap-sources", rule, |r| {
        quadrature::integrate_weighted(r, v2, |x| v1.value(x) - v2.value(x))
    })?;
    let gap_targets = functional_value("entropy-gap-targets", rule, |r| {
        quadrature::integrate_weighted(r, w2, |x| w1.value(x) - w2.value(x))
    })?;
    let mismatch = functional_value("target-mismatch-fisher", rule, |r| {
        quadrature::integrate_weighted(r, w2, |x| (w1.grad(x) - w2.grad(x)).norm_squared())
    })?;
    let distance = functional_value("map-distance", rule, |r| {
        weighted_map_integral(r, v2, |x| {
            let t1 = transport::map_value(map1, x)?;
            let t2 = transport::map_value(map2, x)?;
            Ok((t1 - t2).norm_squared())
        })
    })?;

    let mut aux = BTreeMap::new();
    if mismatch.value.abs() <= COINCIDENT_TARGET_THRESHOLD {
        let refinement_lhs = gap_sources.value;
        let refinement_rhs = 0.5 * c * distance.value;
        aux.insert("refinement-lhs".to_owned(), refinement_lhs);
        aux.insert("refinement-rhs".to_owned(), refinement_rhs);
        aux.insert(
            "refinement-slack".to_owned(),
            refinement_lhs - refinement_rhs,
        );
    }

    let items = vec![
        ReportItem::new(Side::Lhs, 4.0 / c, gap_sources),
        ReportItem::new(Side::Lhs, -4.0 / c, gap_targets),
        ReportItem::new(Side::Lhs, 4.0 / (c * c), mismatch),
        ReportItem::new(Side::Rhs, 1.0, distance),
    ];
    Ok(InequalityReport::assemble(
        "map-stability",
        Direction::GeqRhs,
        TOLERANCE_FLOOR,
        items,
        aux,
    ))
}

/// Checks the second order dissipation bound along a single map T = id + ∇φ
/// from e^{-V}γ to e^{-W}γ:
///
///   Fisher(V) − Fisher(W) ≥ 2 Ent(V) − 2 Ent(W)
///     − 2∫ln det₂(I+∇²φ)e^{-V}dγ + ∫Σ_a‖(I+∇²φ)^{-1/2}(D_a∇²φ)(I+∇²φ)^{-1/2}‖²e^{-V}dγ
///     + ∫‖∇²φ‖²e^{-V}dγ + 2∫⟨∇²W∘T, ∇²φ⟩e^{-V}dγ
///     + ∫Σ_a⟨∇²W(T)u_a, u_a⟩e^{-V}dγ,   u_a the columns of ∇²φ.
///
/// Needs third derivatives of the map, so grid-backed maps are rejected.
pub fn verify_second_order_bound(
    map: &TransportMap,
    rule: &QuadratureRule,
) -> Result<InequalityReport> {
    require_same_dim(map, rule)?;
    let (v, w) = (map.source(), map.target());

    let items = vec![
        ReportItem::new(
            Side::Lhs,
            1.0,
            functional_value("fisher-source", rule, |r| {
                functionals::fisher_information(v, r)
            })?,
        ),
        ReportItem::new(
            Side::Lhs,
            -1.0,
            functional_value("fisher-target", rule, |r| {
                functionals::fisher_information(w, r)
            })?,
        ),
        ReportItem::new(
            Side::Rhs,
            2.0,
            functional_value("entropy-source", rule, |r| functionals::relative_entropy(v, r))?,
        ),
        ReportItem::new(
            Side::Rhs,
            -2.0,
            functional_value("entropy-target", rule, |r| functionals::relative_entropy(w, r))?,
        ),
        ReportItem::new(
            Side::Rhs,
            -2.0,
            functional_value("jacobian-logdet", rule, |r| {
                weighted_map_integral(r, v, |x| {
                    functionals::log_det2(&transport::map_jacobian(map, x)?)
                })
            })?,
        ),
        ReportItem::new(
            Side::Rhs,
            1.0,
            functional_value("sandwich", rule, |r| {
                weighted_map_integral(r, v, |x| functionals::sandwich_term(map, x))
            })?,
        ),
        ReportItem::new(
            Side::Rhs,
            1.0,
            functional_value("hessian-energy", rule, |r| {
                weighted_map_integral(r, v, |x| {
                    let h = hessian_phi(map, x)?;
                    Ok(linalg::hs_inner(&h, &h))
                })
            })?,
        ),
        ReportItem::new(
            Side::Rhs,
            2.0,
            functional_value("target-curvature-cross", rule, |r| {
                weighted_map_integral(r, v, |x| {
                    let t = transport::map_value(map, x)?;
                    let h = hessian_phi(map, x)?;
                    Ok(linalg::hs_inner(&w.hessian(t.as_slice()), &h))
                })
            })?,
        ),
        ReportItem::new(
            Side::Rhs,
            1.0,
            functional_value("target-curvature-quadratic", rule, |r| {
                weighted_map_integral(r, v, |x| functionals::nw_term(w, map, x))
            })?,
        ),
    ];
    Ok(InequalityReport::assemble(
        "second-order-bound",
        Direction::GeqRhs,
        TOLERANCE_FLOOR,
        items,
        BTreeMap::new(),
    ))
}

/// Checks the dimension-free Hessian energy bound for T = id + ∇φ pushing
/// e^{-V}γ to e^{-W}γ under ∇²W ≥ −c·I with 0 ≤ c < 1:
///
///   Fisher(V) − Fisher(W) + (2/(1−c))∫‖∇²W‖²e^{-W}dγ
///     ≥ 2 Ent(V) − 2 Ent(W) + ((1−c)/2)∫‖∇²φ‖²e^{-V}dγ.
pub fn verify_sobolev_bound(
    map: &TransportMap,
    c: f64,
    rule: &QuadratureRule,
) -> Result<InequalityReport> {
    require_same_dim(map, rule)?;
    check_semiconvexity(map.target(), c, rule)?;
    let (v, w) = (map.source(), map.target());

    let items = vec![
        ReportItem::new(
            Side::Lhs,
            1.0,
            functional_value("fisher-source", rule, |r| {
                functionals::fisher_information(v, r)
            })?,
        ),
        ReportItem::new(
            Side::Lhs,
            -1.0,
            functional_value("fisher-target", rule, |r| {
                functionals::fisher_information(w, r)
            })?,
        ),
        ReportItem::new(
            Side::Lhs,
            2.0 / (1.0 - c),
            functional_value("target-hessian-energy", rule, |r| {
                quadrature::integrate_weighted(r, w, |x| {
                    let h = w.hessian(x);
                    linalg::hs_inner(&h, &h)
                })
            })?,
        ),
        ReportItem::new(
            Side::Rhs,
            2.0,
            functional_value("entropy-source", rule, |r| functionals::relative_entropy(v, r))?,
        ),
        ReportItem::new(
            Side::Rhs,
            -2.0,
            functional_value("entropy-target", rule, |r| functionals::relative_entropy(w, r))?,
        ),
        ReportItem::new(
            Side::Rhs,
            (1.0 - c) / 2.0,
            functional_value("hessian-energy", rule, |r| {
                weighted_map_integral(r, v, |x| {
                    let h = hessian_phi(map, x)?;
                    Ok(linalg::hs_inner(&h, &h))
                })
            })?,
        ),
    ];
    Ok(InequalityReport::assemble(
        "sobolev-bound",
        Direction::GeqRhs,
        TOLERANCE_FLOOR,
        items,
        BTreeMap::new(),
    ))
}

/// ‖∇³φ‖²_HS at x, summed over directional second derivatives.
fn third_derivative_energy(map: &TransportMap, x: &[f64]) -> Result<f64> {
    let dim = map.dim();
    let mut direction = vec![0.0; dim];
    let mut total = 0.0;
    for a in 0..dim {
        direction.iter_mut().for_each(|d| *d = 0.0);
        direction[a] = 1.0;
        let da = transport::map_third_derivative(map, x, &direction)?;
        total += linalg::hs_inner(&da, &da);
    }
    Ok(total)
}

/// Checks the L^p third derivative bound for T = id + ∇φ pushing e^{-V}γ to
/// e^{-W}γ under ∇²W ≥ −c·I, 0 ≤ c < 1 and 1 ≤ p < 2:
///
///   ‖∇³φ‖²_{L^p(e^{-V}γ)} ≤ ‖‖I+∇²φ‖_op‖²_{L^q(e^{-V}γ)}
///       · [Fisher(V) + (2/(1−c))∫‖∇²W‖²e^{-W}dγ],   q = 2p/(2−p).
///
/// Both sides are single items evaluating the assembled expression; the
/// factors at the base rule land in `aux`.
pub fn verify_third_derivative_bound(
    map: &TransportMap,
    c: f64,
    p: f64,
    rule: &QuadratureRule,
) -> Result<InequalityReport> {
    require_same_dim(map, rule)?;
    check_semiconvexity(map.target(), c, rule)?;
    let q = require_lp_exponent(p)?;
    let (v, w) = (map.source(), map.target());

    let lhs_value = |r: &QuadratureRule| -> Result<f64> {
        let integral = weighted_map_integral(r, v, |x| {
            Ok(third_derivative_energy(map, x)?.powf(p / 2.0))
        })?;
        Ok(integral.powf(2.0 / p))
    };
    let opnorm_factor = |r: &QuadratureRule| -> Result<f64> {
        let integral = weighted_map_integral(r, v, |x| {
            Ok(linalg::op_norm_sym(&transport::map_jacobian(map, x)?).powf(q))
        })?;
        Ok(integral.powf(2.0 / q))
    };
    let curvature_budget = |r: &QuadratureRule| -> Result<f64> {
        let fisher = functionals::fisher_information(v, r)?;
        let target_energy = quadrature::integrate_weighted(r, w, |x| {
            let h = w.hessian(x);
            linalg::hs_inner(&h, &h)
        })?;
        Ok(fisher + 2.0 / (1.0 - c) * target_energy)
    };

    let mut aux = BTreeMap::new();
    aux.insert("exponent-q".to_owned(), q);
    aux.insert("operator-norm-factor".to_owned(), opnorm_factor(rule)?);
    aux.insert("curvature-budget".to_owned(), curvature_budget(rule)?);

    let items = vec![
        ReportItem::new(
            Side::Lhs,
            1.0,
            functional_value("third-derivative-energy", rule, lhs_value)?,
        ),
        ReportItem::new(
            Side::Rhs,
            1.0,
            functional_value("curvature-capacity", rule, |r| {
                Ok(opnorm_factor(r)? * curvature_budget(r)?)
            })?,
        ),
    ];
    Ok(InequalityReport::assemble(
        "third-derivative-bound",
        Direction::LeqRhs,
        TOLERANCE_FLOOR,
        items,
        aux,
    ))
}

/// Which coefficient multiplies the source entropy gap in the Hessian
/// stability budget. The tight form carries 2, the relaxed form 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilityVariant {
    Tight,
    Relaxed,
}

impl StabilityVariant {
    pub fn entropy_coefficient(self) -> f64 {
        match self {
            StabilityVariant::Tight => 2.0,
            StabilityVariant::Relaxed => 3.0,
        }
    }

    fn report_name(self) -> &'static str {
        match self {
            StabilityVariant::Tight => "hessian-stability",
            StabilityVariant::Relaxed => "hessian-stability-relaxed",
        }
    }
}

/// Checks the L^p stability of map Hessians under perturbations of the data,
/// everything weighted by the second pair's source measure e^{-V₂}γ:
///
///   ‖∇²φ₁−∇²φ₂‖²_{L^p} ≤ 2M·[κ·∫(V₁−V₂)e^{-V₂}dγ
///       + (2/(1−c))∫|∇(W₁−W₂)|²e^{-W₂}dγ],
///
/// with M = max_i ‖‖I+∇²φ_i‖_op‖²_{L^q}, q = 2p/(2−p), κ from the variant,
/// under ∇²W₁ ≥ −c·I with 0 ≤ c < 1 and 1 ≤ p < 2.
pub fn verify_hessian_stability(
    map1: &TransportMap,
    map2: &TransportMap,
    c: f64,
    p: f64,
    variant: StabilityVariant,
    rule: &QuadratureRule,
) -> Result<InequalityReport> {
    require_same_dim(map1, rule)?;
    require_same_dim(map2, rule)?;
    check_semiconvexity(map1.target(), c, rule)?;
    let q = require_lp_exponent(p)?;
    let kappa = variant.entropy_coefficient();
    let (v1, w1) = (map1.source(), map1.target());
    let (v2, w2) = (map2.source(), map2.target());

    let hessian_gap = |r: &QuadratureRule| -> Result<f64> {
        let integral = weighted_map_integral(r, v2, |x| {
            let j1 = transport::map_jacobian(map1, x)?;
            let j2 = transport::map_jacobian(map2, x)?;
            Ok(linalg::hs_norm(&(j1 - j2)).powf(p))
        })?;
        Ok(integral.powf(2.0 / p))
    };
    let opnorm_factor = |r: &QuadratureRule, map: &TransportMap| -> Result<f64> {
        let integral = weighted_map_integral(r, v2, |x| {
            Ok(linalg::op_norm_sym(&transport::map_jacobian(map, x)?).powf(q))
        })?;
        Ok(integral.powf(2.0 / q))
    };
    let entropy_gap = |r: &QuadratureRule| -> Result<f64> {
        quadrature::integrate_weighted(r, v2, |x| v1.value(x) - v2.value(x))
    };
    let target_mismatch = |r: &QuadratureRule| -> Result<f64> {
        quadrature::integrate_weighted(r, w2, |x| (w1.grad(x) - w2.grad(x)).norm_squared())
    };
    let budget = |r: &QuadratureRule| -> Result<f64> {
        let m = opnorm_factor(r, map1)?.max(opnorm_factor(r, map2)?);
        Ok(2.0 * m * (kappa * entropy_gap(r)? + 2.0 / (1.0 - c) * target_mismatch(r)?))
    };

    let mut aux = BTreeMap::new();
    aux.insert("exponent-q".to_owned(), q);
    aux.insert("entropy-coefficient".to_owned(), kappa);
    aux.insert(
        "operator-norm-factor".to_owned(),
        opnorm_factor(rule, map1)?.max(opnorm_factor(rule, map2)?),
    );
    aux.insert("entropy-gap".to_owned(), entropy_gap(rule)?);
    aux.insert("target-mismatch".to_owned(), target_mismatch(rule)?);

    let items = vec![
        ReportItem::new(
            Side::Lhs,
            1.0,
            functional_value("hessian-gap", rule, hessian_gap)?,
        ),
        ReportItem::new(
            Side::Rhs,
            1.0,
            functional_value("stability-budget", rule, budget)?,
        ),
    ];
    Ok(InequalityReport::assemble(
        variant.report_name(),
        Direction::LeqRhs,
        TOLERANCE_FLOOR,
        items,
        aux,
    ))
}

/// Checks the transport-entropy inequality for a map from γ to e^{-W}γ:
/// twice the relative entropy of the target dominates the quadratic cost,
///
///   2 Ent(W) ≥ ∫|T(x)−x|² dγ.
///
/// Meaningful when the map's source is γ itself.
pub fn verify_talagrand(map: &TransportMap, rule: &QuadratureRule) -> Result<InequalityReport> {
    require_same_dim(map, rule)?;
    let items = vec![
        ReportItem::new(
            Side::Lhs,
            2.0,
            functional_value("entropy-target", rule, |r| {
                functionals::relative_entropy(map.target(), r)
            })?,
        ),
        ReportItem::new(
            Side::Rhs,
            1.0,
            functional_value("transport-cost", rule, |r| {
                functionals::w2_cost_from_map(map, map.source(), r)
            })?,
        ),
    ];
    Ok(InequalityReport::assemble(
        "talagrand",
        Direction::GeqRhs,
        TOLERANCE_FLOOR,
        items,
        BTreeMap::new(),
    ))
}

/// Default observable battery for the spectral gap check: a constant, a
/// coordinate, its square, the full squared norm, and one oscillation.
pub fn poincare_battery(dim: usize) -> Vec<(String, FieldExpr)> {
    let mut e1 = DVector::zeros(dim);
    e1[0] = 1.0;
    vec![
        ("1".to_owned(), FieldExpr::constant(dim, 1.0)),
        ("x1".to_owned(), FieldExpr::coordinate(dim, 0)),
        ("x1^2".to_owned(), FieldExpr::coordinate_square(dim, 0)),
        ("|x|^2".to_owned(), FieldExpr::norm_sq(dim)),
        ("cos(x1)".to_owned(), FieldExpr::cosine(e1)),
    ]
}

/// Checks the spectral gap inequality (1−c)·Var_{e^{-W}γ}(f) ≤ ∫|∇f|²e^{-W}dγ
/// over a battery of observables, under ∇²W ≥ −c·I with 0 ≤ c < 1. The
/// report's sides show the observable with the smallest margin; every
/// observable's margin lands in `aux` under `slack(name)`.
pub fn verify_poincare(
    w: &Potential,
    c: f64,
    battery: &[(String, FieldExpr)],
    rule: &QuadratureRule,
) -> Result<InequalityReport> {
    check_semiconvexity(w, c, rule)?;
    if battery.is_empty() {
        return Err(Error::invalid("battery", "need at least one observable"));
    }
    let mut aux = BTreeMap::new();
    let mut worst: Option<(f64, FunctionalValue, FunctionalValue)> = None;
    for (name, field) in battery {
        if field.dim() != rule.dim() {
            return Err(Error::DimMismatch {
                expected: rule.dim(),
                got: field.dim(),
            });
        }
        let variance = functional_value(&format!("variance({name})"), rule, |r| {
            let mean = quadrature::integrate_weighted(r, w, |x| field.value(x))?;
            let second = quadrature::integrate_weighted(r, w, |x| {
                let v = field.value(x);
                v * v
            })?;
            Ok(second - mean * mean)
        })?;
        let dirichlet = functional_value(&format!("dirichlet({name})"), rule, |r| {
            quadrature::integrate_weighted(r, w, |x| field.grad(x).norm_squared())
        })?;
        let margin = dirichlet.value - (1.0 - c) * variance.value;
        aux.insert(format!("slack({name})"), margin);
        if worst.as_ref().is_none_or(|(m, _, _)| margin < *m) {
            worst = Some((margin, variance, dirichlet));
        }
    }
    let (_, variance, dirichlet) = worst.expect("battery is nonempty");
    let items = vec![
        ReportItem::new(Side::Lhs, 1.0 - c, variance),
        ReportItem::new(Side::Rhs, 1.0, dirichlet),
    ];
    Ok(InequalityReport::assemble(
        "poincare",
        Direction::LeqRhs,
        TOLERANCE_FLOOR,
        items,
        aux,
    ))
}

/// Checks the change-of-variables residual of the map at the given probe
/// points: the worst |r(x)| must not exceed `tolerance`. The single item is
/// the sup itself (order 0, no truncation estimate).
pub fn verify_map_residual(
    map: &TransportMap,
    probes: &[Vec<f64>],
    tolerance: f64,
) -> Result<InequalityReport> {
    if probes.is_empty() {
        return Err(Error::invalid("probes", "need at least one probe point"));
    }
    if !(tolerance > 0.0) {
        return Err(Error::invalid(
            "tolerance",
            format!("residual tolerance must be positive, got {tolerance}"),
        ));
    }
    let mut worst = 0.0_f64;
    let mut worst_index = 0usize;
    for (i, x) in probes.iter().enumerate() {
        if x.len() != map.dim() {
            return Err(Error::DimMismatch {
                expected: map.dim(),
                got: x.len(),
            });
        }
        let r = functionals::ma_residual(map.source(), map.target(), map, x)?.abs();
        if r > worst {
            worst = r;
            worst_index = i;
        }
    }
    let mut aux = BTreeMap::new();
    aux.insert("worst-probe-index".to_owned(), worst_index as f64);
    aux.insert("probe-count".to_owned(), probes.len() as f64);
    let items = vec![ReportItem::new(
        Side::Lhs,
        1.0,
        FunctionalValue {
            name: "residual-sup".to_owned(),
            value: worst,
            order: 0,
            truncation: 0.0,
        },
    )];
    Ok(InequalityReport::assemble(
        "map-residual",
        Direction::LeqRhs,
        tolerance,
        items,
        aux,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::Term;
    use crate::quadrature::gauss_hermite;
    use crate::transport::{solve_gaussian_closed_form, solve_quantile_1d, QuantileParams};
    use approx::assert_abs_diff_eq;

    fn gaussian_potential(dim: usize, sigma_sq: f64) -> Potential {
        let a = DMatrix::from_diagonal_element(dim, dim, 1.0 / sigma_sq - 1.0);
        let k = 0.5 * sigma_sq.ln() * dim as f64;
        Potential::quadratic(a, DVector::zeros(dim), k).unwrap()
    }

    fn gauss_map(sigma_sq_source: f64, sigma_sq_target: f64) -> TransportMap {
        let v = gaussian_potential(1, sigma_sq_source);
        let w = gaussian_potential(1, sigma_sq_target);
        solve_gaussian_closed_form(&v, &w).unwrap()
    }

    fn rule1() -> QuadratureRule {
        gauss_hermite(1, 60).unwrap()
    }

    fn quartic_map(rule: &QuadratureRule) -> TransportMap {
        let raw = Potential::polynomial(
            1,
            vec![Term {
                powers: vec![4],
                coeff: 0.1,
            }],
        )
        .unwrap();
        let w = crate::potentials::normalize(&raw, rule).unwrap();
        solve_quantile_1d(&Potential::zero(1), &w, &QuantileParams::default()).unwrap()
    }

    #[test]
    fn entropy_balance_is_exact_for_coincident_pairs() {
        let rule = rule1();
        let map = gauss_map(1.0, 2.0);
        let report = verify_entropy_balance(&map, &map, &rule).unwrap();
        assert_eq!(report.verdict, Verdict::IdentityOk);
        assert!(report.slack <= 1e-12, "slack {}", report.slack);
    }

    #[test]
    fn entropy_balance_matches_gaussian_quadruple() {
        let rule = rule1();
        let map1 = gauss_map(1.0, 2.0);
        let map2 = gauss_map(1.21, 2.0);
        let report = verify_entropy_balance(&map1, &map2, &rule).unwrap();
        assert_eq!(report.verdict, Verdict::IdentityOk);
        assert!(report.slack <= 1e-9, "slack {}", report.slack);
        // lhs is the entropy of e^{-V₂}γ relative to γ: ½(σ² − 1 − ln σ²).
        let oracle = 0.5 * (0.21 - 1.21f64.ln());
        assert_abs_diff_eq!(report.lhs, oracle, epsilon = 1e-9);
        assert_eq!(side_sum(&report.items, Side::Lhs), report.lhs);
        assert_eq!(side_sum(&report.items, Side::Rhs), report.rhs);
    }

    #[test]
    fn entropy_balance_survives_swapping_the_pairs() {
        let rule = rule1();
        let map1 = gauss_map(1.0, 2.0);
        let map2 = gauss_map(1.21, 2.0);
        let report = verify_entropy_balance(&map2, &map1, &rule).unwrap();
        assert_eq!(report.verdict, Verdict::IdentityOk);
        assert!(report.slack <= 1e-9, "slack {}", report.slack);
    }

    #[test]
    fn entropy_balance_handles_distinct_targets() {
        let rule = rule1();
        let map1 = gauss_map(1.0, 2.0);
        let map2 = gauss_map(1.0, 1.44);
        let report = verify_entropy_balance(&map1, &map2, &rule).unwrap();
        assert_eq!(report.verdict, Verdict::IdentityOk);
        assert!(report.slack <= 1e-9, "slack {}", report.slack);
        let cross = report
            .items
            .iter()
            .find(|item| item.integral.name == "target-mismatch-cross")
            .unwrap();
        assert!(cross.integral.value.abs() > 1e-3);
    }

    #[test]
    fn map_stability_bounds_gaussian_map_distance() {
        let rule = rule1();
        let map1 = gauss_map(1.0, 2.0);
        let map2 = gauss_map(1.21, 2.0);
        let report = verify_map_stability(&map1, &map2, 0.5, &rule).unwrap();
        assert!(report.holds());
        // Same-target refinement: ∫(V₁−V₂)e^{-V₂}dγ ≥ (c/2)·distance, with
        // distance = 2(1 − 1/1.1)²·1.21 = 0.02 here.
        let refinement = report.aux.get("refinement-slack").copied().unwrap();
        let oracle = 0.5 * (0.21 - 1.21f64.ln()) - 0.25 * 0.02;
        assert_abs_diff_eq!(refinement, oracle, epsilon = 1e-9);
        assert!(refinement > 0.0);
    }

    #[test]
    fn map_stability_distance_shrinks_with_the_perturbation() {
        let rule = rule1();
        let map1 = gauss_map(1.0, 2.0);
        let mut last = f64::INFINITY;
        for sigma_sq in [1.44, 1.21, 1.1025] {
            let map2 = gauss_map(sigma_sq, 2.0);
            let report = verify_map_stability(&map1, &map2, 0.5, &rule).unwrap();
            assert!(report.holds());
            let distance = report.rhs;
            assert!(distance < last, "distance {distance} at {sigma_sq}");
            last = distance;
        }
        assert!(last < 1e-2);
    }

    #[test]
    fn map_stability_rejects_bad_convexity_bounds() {
        let rule = rule1();
        let map = gauss_map(1.0, 2.0);
        assert!(matches!(
            verify_map_stability(&map, &map, 0.0, &rule),
            Err(Error::InvalidParam { name: "c", .. })
        ));
        // I + ∇²W = 1/2 for the N(0,2) target, so claiming c = 0.9 is false.
        assert!(matches!(
            verify_map_stability(&map, &map, 0.9, &rule),
            Err(Error::InvalidParam { name: "c", .. })
        ));
    }

    #[test]
    fn second_order_bound_is_tight_for_gaussian_contraction() {
        let rule = rule1();
        let map = gauss_map(1.0, 2.0);
        let report = verify_second_order_bound(&map, &rule).unwrap();
        assert!(report.holds());
        assert_abs_diff_eq!(report.lhs, -0.5, epsilon = 1e-9);
        assert!(report.slack.abs() <= 1e-8, "slack {}", report.slack);
    }

    #[test]
    fn second_order_bound_holds_for_quartic_target() {
        let rule = rule1();
        let map = quartic_map(&rule);
        let report = verify_second_order_bound(&map, &rule).unwrap();
        assert!(report.holds(), "slack {}", report.slack);
    }

    #[test]
    fn sobolev_bound_slack_matches_frozen_gaussian_value() {
        let rule = rule1();
        let map = gauss_map(1.0, 2.0);
        let report = verify_sobolev_bound(&map, 0.5, &rule).unwrap();
        assert!(report.holds());
        assert_abs_diff_eq!(report.slack, 0.76395960062660221, epsilon = 1e-9);
        assert_eq!(side_sum(&report.items, Side::Lhs), report.lhs);
        assert_eq!(side_sum(&report.items, Side::Rhs), report.rhs);
    }

    #[test]
    fn sobolev_bound_slack_is_invariant_under_appended_coordinates() {
        let rule_1d = gauss_hermite(1, 40).unwrap();
        let map_1d = gauss_map(1.0, 2.0);
        let slack_1d = verify_sobolev_bound(&map_1d, 0.5, &rule_1d).unwrap().slack;

        let rule_2d = gauss_hermite(2, 40).unwrap();
        let mut a = DMatrix::zeros(2, 2);
        a[(0, 0)] = -0.5;
        let w = Potential::quadratic(a, DVector::zeros(2), 0.5 * 2.0f64.ln()).unwrap();
        let map_2d = solve_gaussian_closed_form(&Potential::zero(2), &w).unwrap();
        let slack_2d = verify_sobolev_bound(&map_2d, 0.5, &rule_2d).unwrap().slack;

        assert_abs_diff_eq!(slack_1d, slack_2d, epsilon = 1e-8);
    }

    #[test]
    fn sobolev_bound_slack_grows_with_the_claimed_constant() {
        let rule = rule1();
        let map = gauss_map(1.0, 2.0);
        let at_half = verify_sobolev_bound(&map, 0.5, &rule).unwrap();
        let at_seven = verify_sobolev_bound(&map, 0.7, &rule).unwrap();
        assert!(at_half.holds() && at_seven.holds());
        assert!(at_seven.slack > at_half.slack);
    }

    #[test]
    fn sobolev_bound_rejects_understated_or_invalid_constants() {
        let rule = rule1();
        let map = gauss_map(1.0, 2.0);
        // ∇²W = −1/2 for the N(0,2) target, below the claimed −0.3 floor.
        assert!(matches!(
            verify_sobolev_bound(&map, 0.3, &rule),
            Err(Error::InvalidParam { name: "c", .. })
        ));
        assert!(matches!(
            verify_sobolev_bound(&map, 1.0, &rule),
            Err(Error::InvalidParam { name: "c", .. })
        ));
    }

    #[test]
    fn third_derivative_bound_has_zero_lhs_for_linear_maps() {
        let rule = rule1();
        let map = gauss_map(1.0, 2.0);
        let report = verify_third_derivative_bound(&map, 0.5, 1.0, &rule).unwrap();
        assert!(report.holds());
        assert_eq!(report.lhs, 0.0);
        assert!(report.rhs > 0.0);
        assert_abs_diff_eq!(report.aux["exponent-q"], 2.0, epsilon = 0.0);
    }

    #[test]
    fn third_derivative_bound_holds_for_quartic_target() {
        let rule = rule1();
        let map = quartic_map(&rule);
        for p in [1.0, 1.5] {
            let report = verify_third_derivative_bound(&map, 0.5, p, &rule).unwrap();
            assert!(report.holds(), "p {p} slack {}", report.slack);
            assert!(report.lhs > 0.0);
        }
    }

    #[test]
    fn third_derivative_bound_rejects_bad_exponents() {
        let rule = rule1();
        let map = gauss_map(1.0, 2.0);
        for p in [0.5, 2.0, 3.0] {
            assert!(matches!(
                verify_third_derivative_bound(&map, 0.5, p, &rule),
                Err(Error::InvalidParam { name: "p", .. })
            ));
        }
    }

    #[test]
    fn hessian_stability_controls_gaussian_target_perturbations() {
        let rule = rule1();
        let map1 = gauss_map(1.0, 2.0);
        let map2 = gauss_map(1.21, 2.25);
        let tight =
            verify_hessian_stability(&map1, &map2, 0.5, 1.0, StabilityVariant::Tight, &rule)
                .unwrap();
        let relaxed =
            verify_hessian_stability(&map1, &map2, 0.5, 1.0, StabilityVariant::Relaxed, &rule)
                .unwrap();
        assert!(tight.holds() && relaxed.holds());
        // Constant Jacobian gap: lhs = (√2 − 1.5/1.1)².
        let gap = 2.0f64.sqrt() - 1.5 / 1.1;
        assert_abs_diff_eq!(tight.lhs, gap * gap, epsilon = 1e-9);
        assert_abs_diff_eq!(relaxed.lhs, tight.lhs, epsilon = 1e-15);
        // The relaxed budget weights the positive entropy gap more heavily.
        assert!(relaxed.rhs > tight.rhs);
        assert_eq!(tight.name, "hessian-stability");
        assert_eq!(relaxed.name, "hessian-stability-relaxed");
    }

    #[test]
    fn hessian_stability_vanishes_for_identical_pairs() {
        let rule = rule1();
        let map = gauss_map(1.0, 2.0);
        let report =
            verify_hessian_stability(&map, &map, 0.5, 1.0, StabilityVariant::Tight, &rule)
                .unwrap();
        assert!(report.holds());
        assert_eq!(report.lhs, 0.0);
        assert!(report.rhs.abs() <= 1e-12);
    }

    #[test]
    fn talagrand_matches_gaussian_closed_forms() {
        let rule = rule1();
        let map = gauss_map(1.0, 2.0);
        let report = verify_talagrand(&map, &rule).unwrap();
        assert!(report.holds());
        assert_abs_diff_eq!(report.lhs, 1.0 - 2.0f64.ln(), epsilon = 1e-9);
        let root2 = 2.0f64.sqrt();
        assert_abs_diff_eq!(report.rhs, (root2 - 1.0) * (root2 - 1.0), epsilon = 1e-9);
    }

    #[test]
    fn talagrand_holds_for_quartic_target() {
        let rule = rule1();
        let map = quartic_map(&rule);
        let report = verify_talagrand(&map, &rule).unwrap();
        assert!(report.holds());
        assert!(report.slack > 0.0);
    }

    #[test]
    fn poincare_is_tight_for_the_linear_observable() {
        let rule = rule1();
        let w = gaussian_potential(1, 2.0);
        let battery = poincare_battery(1);
        let report = verify_poincare(&w, 0.5, &battery, &rule).unwrap();
        assert!(report.holds());
        assert!(report.slack.abs() <= 1e-9, "slack {}", report.slack);
        assert_abs_diff_eq!(report.aux["slack(x1)"], 0.0, epsilon = 1e-9);
        // Var(x²) = 8 under N(0,2); (1−c)·8 = 4 against ∫|2x|² = 8.
        assert_abs_diff_eq!(report.aux["slack(x1^2)"], 4.0, epsilon = 1e-6);
        assert!(report.aux["slack(cos(x1))"] > 0.0);
    }

    #[test]
    fn poincare_rejects_empty_batteries_and_false_constants() {
        let rule = rule1();
        let w = gaussian_potential(1, 2.0);
        assert!(matches!(
            verify_poincare(&w, 0.5, &[], &rule),
            Err(Error::InvalidParam { name: "battery", .. })
        ));
        assert!(matches!(
            verify_poincare(&w, 0.2, &poincare_battery(1), &rule),
            Err(Error::InvalidParam { name: "c", .. })
        ));
    }

    #[test]
    fn map_residual_verdicts_follow_the_tolerance() {
        let rule = rule1();
        let probes: Vec<Vec<f64>> = (-8..=8).map(|i| vec![0.25 * i as f64]).collect();
        let linear = gauss_map(1.0, 2.0);
        let report = verify_map_residual(&linear, &probes, 1e-10).unwrap();
        assert_eq!(report.verdict, Verdict::Holds);

        let quartic = quartic_map(&rule);
        let loose = verify_map_residual(&quartic, &probes, 1e-4).unwrap();
        assert_eq!(loose.verdict, Verdict::Holds);
        let strict = verify_map_residual(&quartic, &probes, 1e-30).unwrap();
        assert_eq!(strict.verdict, Verdict::Violated);
        assert_eq!(strict.aux["probe-count"], probes.len() as f64);
    }

    #[test]
    fn weighted_map_integral_propagates_probe_errors() {
        let rule = rule1();
        let v = Potential::zero(1);
        let err = weighted_map_integral(&rule, &v, |x| {
            if x[0].abs() > 3.0 {
                Err(Error::invalid("probe", "out of range"))
            } else {
                Ok(1.0)
            }
        });
        assert!(err.is_err());
        let ok = weighted_map_integral(&rule, &v, |x| Ok(x[0] * x[0])).unwrap();
        assert_abs_diff_eq!(ok, 1.0, epsilon = 1e-10);
    }
}
