//! Scenario files: the TOML schema, strict validation, and construction of
//! the potentials, transport solves, and verification requests they name.
//!
//! Validation is front-loaded so a bad file fails before any numerics run,
//! with a message naming the offending field. Every configuration problem,
//! including a backend rejecting the measures it was asked to couple, maps
//! to exit code 2; only verdicts decide between 0 and 1.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use gaussot::inequalities::StabilityVariant;
use gaussot::potentials::{self, Potential, Term};
use gaussot::quadrature::{self, QuadratureRule};
use gaussot::transport::{self, EntropicParams, GridSpec, QuantileParams, TransportMap};

/// Largest ambient dimension a scenario may declare; verification integrals
/// run on tensor rules, which get expensive past this point.
pub const MAX_SCENARIO_DIM: usize = 4;

/// A scenario file that cannot be used: unparsable, inconsistent, or naming
/// parameters its solvers or verifications reject.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub type ConfigResult<T> = Result<T, ConfigError>;

fn bad<T>(message: impl Into<String>) -> ConfigResult<T> {
    Err(ConfigError(message.into()))
}

/// Raw deserialized scenario file. Keys are kebab-case in TOML and the file
/// is echoed verbatim into every report produced from it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ScenarioFile {
    pub name: String,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_order: Option<usize>,
    #[serde(default, rename = "potential")]
    pub potentials: Vec<PotentialDef>,
    pub solve: SolveDef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve2: Option<SolveDef>,
    #[serde(default, rename = "verify")]
    pub verifications: Vec<VerifyDef>,
}

/// One named potential. `kind` selects the constructor and decides which of
/// the remaining fields apply; setting a field the kind does not use is an
/// error, not a silent ignore.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PotentialDef {
    pub name: String,
    /// One of "zero", "quadratic", "polynomial", "separable".
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Symmetric matrix of the quadratic form ½⟨Ax, x⟩, row by row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<TermDef>>,
    /// Names of previously defined one-dimensional potentials, one per axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<String>>,
    /// Shift by a constant so e^{-V}γ has unit mass under the scenario rule.
    #[serde(default)]
    pub normalize: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TermDef {
    pub powers: Vec<u8>,
    pub coeff: f64,
}

/// One transport solve: which pair of named potentials to couple and with
/// which backend. Tuning knobs apply only to the backend that reads them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SolveDef {
    pub source: String,
    pub target: String,
    /// One of "linear", "quantile", "entropic".
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knots: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points_per_axis: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
}

/// One verification request. `kind` decides which parameters are read and
/// which are forbidden.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct VerifyDef {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<usize>,
}

/// A validated verification, parameters resolved and defaults applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VerificationRequest {
    EntropyBalance,
    MapStability { c: f64 },
    SecondOrderBound,
    SobolevBound { c: f64 },
    ThirdDerivativeBound { c: f64, p: f64 },
    HessianStability { c: f64, p: f64, variant: StabilityVariant },
    Talagrand,
    Poincare { c: f64 },
    MapResidual { tolerance: f64, range: f64, probes_per_axis: usize },
}

pub const VERIFICATION_KINDS: [&str; 10] = [
    "entropy-balance",
    "map-stability",
    "second-order-bound",
    "sobolev-bound",
    "third-derivative-bound",
    "hessian-stability",
    "hessian-stability-relaxed",
    "talagrand",
    "poincare",
    "map-residual",
];

impl VerificationRequest {
    /// The stable kind string, identical to the report name it produces.
    pub fn kind(&self) -> &'static str {
        match self {
            VerificationRequest::EntropyBalance => "entropy-balance",
            VerificationRequest::MapStability { .. } => "map-stability",
            VerificationRequest::SecondOrderBound => "second-order-bound",
            VerificationRequest::SobolevBound { .. } => "sobolev-bound",
            VerificationRequest::ThirdDerivativeBound { .. } => "third-derivative-bound",
            VerificationRequest::HessianStability { variant, .. } => match variant {
                StabilityVariant::Tight => "hessian-stability",
                StabilityVariant::Relaxed => "hessian-stability-relaxed",
            },
            VerificationRequest::Talagrand => "talagrand",
            VerificationRequest::Poincare { .. } => "poincare",
            VerificationRequest::MapResidual { .. } => "map-residual",
        }
    }

    /// True for relations comparing two solved maps.
    pub fn needs_pair(&self) -> bool {
        matches!(
            self,
            VerificationRequest::EntropyBalance
                | VerificationRequest::MapStability { .. }
                | VerificationRequest::HessianStability { .. }
        )
    }
}

/// A fully validated scenario, with potentials built, the quadrature rule
/// constructed, and every verification request resolved.
#[derive(Debug)]
pub struct Scenario {
    file: ScenarioFile,
    seed: u64,
    quad_order: usize,
    rule: QuadratureRule,
    potentials: BTreeMap<String, Potential>,
    requests: Vec<VerificationRequest>,
}

impl Scenario {
    /// Reads and validates a scenario file. CLI overrides win over file
    /// values, which win over defaults.
    pub fn load(
        path: &Path,
        seed_override: Option<u64>,
        quad_order_override: Option<usize>,
    ) -> ConfigResult<Scenario> {
        let text = match std::fs::read_to_string(path) {
            Ok(text) => text,
            Err(err) => return bad(format!("cannot read {}: {err}", path.display())),
        };
        let file: ScenarioFile = match toml::from_str(&text) {
            Ok(file) => file,
            Err(err) => return bad(format!("cannot parse {}: {err}", path.display())),
        };
        Scenario::from_file(file, seed_override, quad_order_override)
    }

    pub fn from_file(
        file: ScenarioFile,
        seed_override: Option<u64>,
        quad_order_override: Option<usize>,
    ) -> ConfigResult<Scenario> {
        if file.name.trim().is_empty() {
            return bad("name: must be nonempty");
        }
        if file.dim == 0 || file.dim > MAX_SCENARIO_DIM {
            return bad(format!(
                "dim: must be in 1..={MAX_SCENARIO_DIM}, got {}",
                file.dim
            ));
        }
        let seed = seed_override.or(file.seed).unwrap_or(0);
        let quad_order = quad_order_override
            .or(file.quad_order)
            .unwrap_or_else(|| quadrature::default_order(file.dim));
        if quad_order == 0 {
            return bad("quad-order: must be at least 1");
        }
        let rule = match quadrature::gauss_hermite(file.dim, quad_order) {
            Ok(rule) => rule,
            Err(err) => return bad(format!("quad-order: {err}")),
        };

        let potentials = build_potentials(&file, quad_order, &rule)?;
        check_solve(&file, &potentials, &file.solve, "solve")?;
        if let Some(solve2) = &file.solve2 {
            check_solve(&file, &potentials, solve2, "solve2")?;
        }
        let requests = build_requests(&file)?;

        Ok(Scenario {
            file,
            seed,
            quad_order,
            rule,
            potentials,
            requests,
        })
    }

    pub fn file(&self) -> &ScenarioFile {
        &self.file
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn dim(&self) -> usize {
        self.file.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn quad_order(&self) -> usize {
        self.quad_order
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn requests(&self) -> &[VerificationRequest] {
        &self.requests
    }

    pub fn potential(&self, name: &str) -> &Potential {
        &self.potentials[name]
    }

    /// Runs the scenario's main solve.
    pub fn solve_primary(&self) -> ConfigResult<TransportMap> {
        self.run_solve(&self.file.solve)
    }

    /// Runs the second solve when the file declares one.
    pub fn solve_secondary(&self) -> ConfigResult<Option<TransportMap>> {
        match &self.file.solve2 {
            Some(def) => Ok(Some(self.run_solve(def)?)),
            None => Ok(None),
        }
    }

    fn run_solve(&self, def: &SolveDef) -> ConfigResult<TransportMap> {
        let source = &self.potentials[&def.source];
        let target = &self.potentials[&def.target];
        let solved = match def.backend.as_str() {
            "linear" => transport::solve_gaussian_closed_form(source, target),
            "quantile" => {
                let mut params = QuantileParams::default();
                if let Some(radius) = def.radius {
                    params.radius = radius;
                }
                if let Some(cells) = def.cells {
                    params.cells = cells;
                }
                if let Some(knots) = def.knots {
                    params.knots = knots;
                }
                transport::solve_quantile_1d(source, target, &params)
            }
            "entropic" => {
                let points = def
                    .points_per_axis
                    .unwrap_or_else(|| default_grid_points(self.dim()));
                let spec = GridSpec::new(self.dim(), def.radius.unwrap_or(6.0), points)
                    .map_err(|err| ConfigError(format!("solve grid: {err}")))?;
                let mut params =
                    EntropicParams::for_grid(&spec, def.final_epsilon.unwrap_or(5e-3));
                if let Some(iters) = def.max_iterations {
                    params.max_iterations = iters;
                }
                transport::solve_entropic_grid(source, target, &spec, &params)
            }
            other => return bad(format!("backend: unknown backend {other:?}")),
        };
        solved.map_err(|err| {
            ConfigError(format!(
                "solving {} -> {} with the {} backend: {err}",
                def.source, def.target, def.backend
            ))
        })
    }
}

/// Grid resolution used when an entropic solve does not pin one down.
fn default_grid_points(dim: usize) -> usize {
    match dim {
        1 => 513,
        2 => 129,
        _ => 33,
    }
}

fn build_potentials(
    file: &ScenarioFile,
    quad_order: usize,
    rule: &QuadratureRule,
) -> ConfigResult<BTreeMap<String, Potential>> {
    let mut built = BTreeMap::new();
    for def in &file.potentials {
        if def.name.trim().is_empty() {
            return bad("potential.name: must be nonempty");
        }
        if built.contains_key(&def.name) {
            return bad(format!("potential.name: duplicate name {:?}", def.name));
        }
        let p = build_potential(file, def, &built)?;
        let p = if def.normalize {
            let norm_rule = if p.dim() == rule.dim() {
                rule.clone()
            } else {
                quadrature::gauss_hermite(p.dim(), quad_order).map_err(|err| {
                    ConfigError(format!("potential {:?}: normalize: {err}", def.name))
                })?
            };
            potentials::normalize(&p, &norm_rule)
                .map_err(|err| ConfigError(format!("potential {:?}: normalize: {err}", def.name)))?
        } else {
            p
        };
        built.insert(def.name.clone(), p);
    }
    Ok(built)
}

fn reject_unused(
    def: &PotentialDef,
    allow_a: bool,
    allow_terms: bool,
    allow_components: bool,
) -> ConfigResult<()> {
    let name = &def.name;
    if !allow_a {
        if def.a.is_some() {
            return bad(format!("potential {name:?}: a does not apply to kind {:?}", def.kind));
        }
        if def.b.is_some() {
            return bad(format!("potential {name:?}: b does not apply to kind {:?}", def.kind));
        }
        if def.k.is_some() {
            return bad(format!("potential {name:?}: k does not apply to kind {:?}", def.kind));
        }
    }
    if !allow_terms && def.terms.is_some() {
        return bad(format!(
            "potential {name:?}: terms does not apply to kind {:?}",
            def.kind
        ));
    }
    if !allow_components && def.components.is_some() {
        return bad(format!(
            "potential {name:?}: components does not apply to kind {:?}",
            def.kind
        ));
    }
    Ok(())
}

fn build_potential(
    file: &ScenarioFile,
    def: &PotentialDef,
    built: &BTreeMap<String, Potential>,
) -> ConfigResult<Potential> {
    let name = &def.name;
    match def.kind.as_str() {
        "zero" => {
            reject_unused(def, false, false, false)?;
            Ok(Potential::zero(def.dim.unwrap_or(file.dim)))
        }
        "quadratic" => {
            reject_unused(def, true, false, false)?;
            let dim = def
                .dim
                .or_else(|| def.a.as_ref().map(Vec::len))
                .or_else(|| def.b.as_ref().map(Vec::len));
            let Some(dim) = dim else {
                return bad(format!("potential {name:?}: quadratic needs dim, a, or b"));
            };
            if dim == 0 {
                return bad(format!("potential {name:?}: dim must be at least 1"));
            }
            let a = match &def.a {
                Some(rows) => {
                    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                        return bad(format!("potential {name:?}: a must be a {dim}x{dim} matrix"));
                    }
                    DMatrix::from_fn(dim, dim, |i, j| rows[i][j])
                }
                None => DMatrix::zeros(dim, dim),
            };
            let b = match &def.b {
                Some(entries) => {
                    if entries.len() != dim {
                        return bad(format!("potential {name:?}: b must have {dim} entries"));
                    }
                    DVector::from_column_slice(entries)
                }
                None => DVector::zeros(dim),
            };
            Potential::quadratic(a, b, def.k.unwrap_or(0.0))
                .map_err(|err| ConfigError(format!("potential {name:?}: {err}")))
        }
        "polynomial" => {
            reject_unused(def, false, true, false)?;
            let Some(terms) = &def.terms else {
                return bad(format!("potential {name:?}: polynomial needs terms"));
            };
            if terms.is_empty() {
                return bad(format!("potential {name:?}: terms must be nonempty"));
            }
            let dim = def.dim.unwrap_or(terms[0].powers.len());
            for (i, term) in terms.iter().enumerate() {
                if term.powers.len() != dim {
                    return bad(format!(
                        "potential {name:?}: terms[{i}].powers must have {dim} entries"
                    ));
                }
            }
            let terms = terms
                .iter()
                .map(|t| Term {
                    powers: t.powers.clone(),
                    coeff: t.coeff,
                })
                .collect();
            Potential::polynomial(dim, terms)
                .map_err(|err| ConfigError(format!("potential {name:?}: {err}")))
        }
        "separable" => {
            reject_unused(def, false, false, true)?;
            let Some(components) = &def.components else {
                return bad(format!("potential {name:?}: separable needs components"));
            };
            if let Some(dim) = def.dim {
                if dim != components.len() {
                    return bad(format!(
                        "potential {name:?}: dim {} does not match {} components",
                        dim,
                        components.len()
                    ));
                }
            }
            let mut parts = Vec::with_capacity(components.len());
            for (i, comp_name) in components.iter().enumerate() {
                let Some(part) = built.get(comp_name) else {
                    return bad(format!(
                        "potential {name:?}: components[{i}] names {comp_name:?}, \
                         which is not defined above it"
                    ));
                };
                if part.dim() != 1 {
                    return bad(format!(
                        "potential {name:?}: components[{i}] ({comp_name:?}) has dim {}, \
                         components must be one-dimensional",
                        part.dim()
                    ));
                }
                parts.push(part.clone());
            }
            Potential::separable(parts)
                .map_err(|err| ConfigError(format!("potential {name:?}: {err}")))
        }
        other => bad(format!(
            "potential {name:?}: unknown kind {other:?}, expected one of \
             zero, quadratic, polynomial, separable"
        )),
    }
}

fn check_solve(
    file: &ScenarioFile,
    potentials: &BTreeMap<String, Potential>,
    def: &SolveDef,
    section: &str,
) -> ConfigResult<()> {
    for (field, name) in [("source", &def.source), ("target", &def.target)] {
        let Some(p) = potentials.get(name) else {
            return bad(format!("{section}.{field}: no potential named {name:?}"));
        };
        if p.dim() != file.dim {
            return bad(format!(
                "{section}.{field}: potential {name:?} has dim {}, scenario has dim {}",
                p.dim(),
                file.dim
            ));
        }
    }
    let reject = |field: &str, set: bool| -> ConfigResult<()> {
        if set {
            bad(format!(
                "{section}.{field}: does not apply to the {} backend",
                def.backend
            ))
        } else {
            Ok(())
        }
    };
    match def.backend.as_str() {
        "linear" => {
            reject("radius", def.radius.is_some())?;
            reject("cells", def.cells.is_some())?;
            reject("knots", def.knots.is_some())?;
            reject("points-per-axis", def.points_per_axis.is_some())?;
            reject("final-epsilon", def.final_epsilon.is_some())?;
            reject("max-iterations", def.max_iterations.is_some())?;
        }
        "quantile" => {
            if file.dim != 1 {
                return bad(format!(
                    "{section}.backend: quantile requires dim 1, scenario has dim {}",
                    file.dim
                ));
            }
            reject("points-per-axis", def.points_per_axis.is_some())?;
            reject("final-epsilon", def.final_epsilon.is_some())?;
            reject("max-iterations", def.max_iterations.is_some())?;
        }
        "entropic" => {
            if file.dim > 3 {
                return bad(format!(
                    "{section}.backend: entropic requires dim 1..=3, scenario has dim {}",
                    file.dim
                ));
            }
            reject("cells", def.cells.is_some())?;
            reject("knots", def.knots.is_some())?;
        }
        other => {
            return bad(format!(
                "{section}.backend: unknown backend {other:?}, expected one of \
                 linear, quantile, entropic"
            ));
        }
    }
    Ok(())
}

fn build_requests(file: &ScenarioFile) -> ConfigResult<Vec<VerificationRequest>> {
    let mut requests = Vec::with_capacity(file.verifications.len());
    let mut seen: Vec<&str> = Vec::new();
    for def in &file.verifications {
        let request = build_request(file, def)?;
        let kind = request.kind();
        if seen.contains(&kind) {
            return bad(format!("verify.kind: duplicate verification {kind:?}"));
        }
        seen.push(kind);
        if request.needs_pair() && file.solve2.is_none() {
            return bad(format!("verify {kind:?}: compares two maps, needs solve2"));
        }
        requests.push(request);
    }
    Ok(requests)
}

fn build_request(file: &ScenarioFile, def: &VerifyDef) -> ConfigResult<VerificationRequest> {
    let kind = def.kind.as_str();
    let reject = |field: &str, set: bool| -> ConfigResult<()> {
        if set {
            bad(format!("verify {kind:?}: {field} does not apply"))
        } else {
            Ok(())
        }
    };
    let semiconvexity = || -> ConfigResult<f64> {
        let Some(c) = def.c else {
            return bad(format!("verify {kind:?}: missing c"));
        };
        if !(0.0..1.0).contains(&c) {
            return bad(format!("verify {kind:?}: c must satisfy 0 <= c < 1, got {c}"));
        }
        Ok(c)
    };
    let exponent = || -> ConfigResult<f64> {
        let Some(p) = def.p else {
            return bad(format!("verify {kind:?}: missing p"));
        };
        if !(1.0..2.0).contains(&p) {
            return bad(format!("verify {kind:?}: p must satisfy 1 <= p < 2, got {p}"));
        }
        Ok(p)
    };

    let request = match kind {
        "entropy-balance" => {
            reject("c", def.c.is_some())?;
            reject("p", def.p.is_some())?;
            VerificationRequest::EntropyBalance
        }
        "map-stability" => {
            let Some(c) = def.c else {
                return bad("verify \"map-stability\": missing c");
            };
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!(
                    "verify \"map-stability\": c must be positive and finite, got {c}"
                ));
            }
            reject("p", def.p.is_some())?;
            VerificationRequest::MapStability { c }
        }
        "second-order-bound" => {
            reject("c", def.c.is_some())?;
            reject("p", def.p.is_some())?;
            VerificationRequest::SecondOrderBound
        }
        "sobolev-bound" => {
            reject("p", def.p.is_some())?;
            VerificationRequest::SobolevBound { c: semiconvexity()? }
        }
        "third-derivative-bound" => VerificationRequest::ThirdDerivativeBound {
            c: semiconvexity()?,
            p: exponent()?,
        },
        "hessian-stability" => VerificationRequest::HessianStability {
            c: semiconvexity()?,
            p: exponent()?,
            variant: StabilityVariant::Tight,
        },
        "hessian-stability-relaxed" => VerificationRequest::HessianStability {
            c: semiconvexity()?,
            p: exponent()?,
            variant: StabilityVariant::Relaxed,
        },
        "talagrand" => {
            reject("c", def.c.is_some())?;
            reject("p", def.p.is_some())?;
            VerificationRequest::Talagrand
        }
        "poincare" => {
            reject("p", def.p.is_some())?;
            VerificationRequest::Poincare { c: semiconvexity()? }
        }
        "map-residual" => {
            reject("c", def.c.is_some())?;
            reject("p", def.p.is_some())?;
            let Some(tolerance) = def.tolerance else {
                return bad("verify \"map-residual\": missing tolerance");
            };
            if !(tolerance > 0.0 && tolerance.is_finite()) {
                return bad(format!(
                    "verify \"map-residual\": tolerance must be positive, got {tolerance}"
                ));
            }
            let range = def.range.unwrap_or(3.0);
            if !(range > 0.0 && range.is_finite()) {
                return bad(format!(
                    "verify \"map-residual\": range must be positive, got {range}"
                ));
            }
            let probes_per_axis = def.probes.unwrap_or_else(|| default_probes(file.dim));
            if probes_per_axis < 2 {
                return bad(format!(
                    "verify \"map-residual\": probes must be at least 2, got {probes_per_axis}"
                ));
            }
            return Ok(VerificationRequest::MapResidual {
                tolerance,
                range,
                probes_per_axis,
            });
        }
        other => {
            return bad(format!(
                "verify.kind: unknown kind {other:?}, expected one of {}",
                VERIFICATION_KINDS.join(", ")
            ));
        }
    };
    // The scalar kinds reached here never read the residual knobs.
    reject("tolerance", def.tolerance.is_some())?;
    reject("range", def.range.is_some())?;
    reject("probes", def.probes.is_some())?;
    Ok(request)
}

/// Probe grid density per axis when a residual check does not pin one down.
fn default_probes(dim: usize) -> usize {
    match dim {
        1 => 201,
        2 => 41,
        3 => 11,
        _ => 7,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(verify: &str) -> String {
        format!(
            r#"
name = "t"
dim = 1

[[potential]]
name = "src"
kind = "zero"

[[potential]]
name = "tgt"
kind = "quadratic"
a = [[-0.5]]
k = 0.34657359027997264

[solve]
source = "src"
target = "tgt"
backend = "linear"

{verify}
"#
        )
    }

    fn load_str(text: &str) -> ConfigResult<Scenario> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|err| ConfigError(err.to_string()))?;
        Scenario::from_file(file, None, None)
    }

    #[test]
    fn a_minimal_scenario_validates_and_solves() {
        let scn = load_str(&minimal(
            "[[verify]]\nkind = \"sobolev-bound\"\nc = 0.5\n",
        ))
        .unwrap();
        assert_eq!(scn.name(), "t");
        assert_eq!(scn.quad_order(), 60);
        assert_eq!(scn.requests().len(), 1);
        assert_eq!(scn.requests()[0].kind(), "sobolev-bound");
        let map = scn.solve_primary().unwrap();
        assert_eq!(map.backend_name(), "linear");
        assert!(scn.solve_secondary().unwrap().is_none());
    }

    #[test]
    fn duplicate_verification_kinds_are_rejected() {
        let err = load_str(&minimal(
            "[[verify]]\nkind = \"talagrand\"\n\n[[verify]]\nkind = \"talagrand\"\n",
        ))
        .unwrap_err();
        assert!(err.0.contains("duplicate"), "{}", err.0);
    }

    #[test]
    fn out_of_range_constants_name_the_field() {
        let err = load_str(&minimal("[[verify]]\nkind = \"sobolev-bound\"\nc = 1.0\n"))
            .unwrap_err();
        assert!(err.0.contains('c'), "{}", err.0);
        assert!(err.0.contains("sobolev-bound"), "{}", err.0);

        let err = load_str(&minimal(
            "[[verify]]\nkind = \"third-derivative-bound\"\nc = 0.5\np = 2.0\n",
        ))
        .unwrap_err();
        assert!(err.0.contains('p'), "{}", err.0);
    }

    #[test]
    fn pair_verifications_require_a_second_solve() {
        let err = load_str(&minimal("[[verify]]\nkind = \"entropy-balance\"\n")).unwrap_err();
        assert!(err.0.contains("solve2"), "{}", err.0);
    }

    #[test]
    fn unknown_fields_and_kinds_are_rejected() {
        let err = load_str(&minimal("[[verify]]\nkind = \"talagrand\"\nbogus = 1\n"))
            .unwrap_err();
        assert!(err.0.contains("bogus"), "{}", err.0);

        let err = load_str(&minimal("[[verify]]\nkind = \"no-such-check\"\n")).unwrap_err();
        assert!(err.0.contains("no-such-check"), "{}", err.0);

        let err =
            load_str(&minimal("[[verify]]\nkind = \"talagrand\"\nc = 0.5\n")).unwrap_err();
        assert!(err.0.contains("does not apply"), "{}", err.0);
    }

    #[test]
    fn backend_knobs_are_checked_against_the_backend() {
        let text = minimal("").replace(
            "backend = \"linear\"",
            "backend = \"linear\"\nradius = 4.0",
        );
        let err = load_str(&text).unwrap_err();
        assert!(err.0.contains("radius"), "{}", err.0);
        assert!(err.0.contains("linear"), "{}", err.0);
    }

    #[test]
    fn separable_components_resolve_in_file_order() {
        let text = r#"
name = "sep"
dim = 2

[[potential]]
name = "axis"
kind = "quadratic"
a = [[1.0]]
normalize = true

[[potential]]
name = "tgt"
kind = "separable"
components = ["axis", "axis"]

[[potential]]
name = "src"
kind = "zero"

[solve]
source = "src"
target = "tgt"
backend = "linear"
"#;
        let scn = load_str(text).unwrap();
        assert_eq!(scn.potential("tgt").dim(), 2);
        let map = scn.solve_primary().unwrap();
        assert_eq!(map.dim(), 2);

        let forward_ref = text.replace("components = [\"axis\", \"axis\"]", "components = [\"axis\", \"later\"]");
        let err = load_str(&forward_ref).unwrap_err();
        assert!(err.0.contains("later"), "{}", err.0);
    }
}
