//! The work behind each subcommand: running scenarios, dispatching
//! verifications, and producing the derived tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use gaussot::functionals;
use gaussot::inequalities::{self, InequalityReport};
use gaussot::matrix_lemmas::{self, BoundBattery, IdentityBattery};
use gaussot::potentials::Potential;
use gaussot::quadrature::{self, QuadratureRule};
use gaussot::tower::{self, SeparableQuadraticSpec, TowerLevel};
use gaussot::transport::{self, QuantileParams, TransportMap};

use crate::report::{MapReport, RunReport, Timings, TruncationSummary};
use crate::scenario::{ConfigError, ConfigResult, Scenario, VerificationRequest};

fn bad<T>(message: impl Into<String>) -> ConfigResult<T> {
    Err(ConfigError(message.into()))
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Prefixes relative output paths with `GAUSSOT_OUT_DIR` when it is set.
pub fn resolve_out(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_owned();
    }
    match std::env::var_os("GAUSSOT_OUT_DIR") {
        Some(dir) => Path::new(&dir).join(path),
        None => path.to_owned(),
    }
}

/// Writes an artifact, creating parent directories as needed.
pub fn write_text(path: &Path, text: &str) -> ConfigResult<()> {
    let full = resolve_out(path);
    if let Some(parent) = full.parent() {
        if !parent.as_os_str().is_empty() {
            if let Err(err) = std::fs::create_dir_all(parent) {
                return bad(format!("cannot create {}: {err}", parent.display()));
            }
        }
    }
    match std::fs::write(&full, text) {
        Ok(()) => Ok(()),
        Err(err) => bad(format!("cannot write {}: {err}", full.display())),
    }
}

/// Tensor grid of probe points over [−range, range]^dim, `per_axis` points
/// per axis, fastest along the first coordinate.
pub fn probe_grid(dim: usize, range: f64, per_axis: usize) -> Vec<Vec<f64>> {
    assert!(per_axis >= 2, "probe grids need at least two points per axis");
    let axis: Vec<f64> = (0..per_axis)
        .map(|i| -range + 2.0 * range * i as f64 / (per_axis - 1) as f64)
        .collect();
    let mut points = Vec::with_capacity(per_axis.pow(dim as u32));
    let mut index = vec![0usize; dim];
    loop {
        points.push(index.iter().map(|&i| axis[i]).collect());
        let mut d = 0;
        loop {
            index[d] += 1;
            if index[d] < per_axis {
                break;
            }
            index[d] = 0;
            d += 1;
            if d == dim {
                return points;
            }
        }
    }
}

fn run_request(
    scn: &Scenario,
    request: VerificationRequest,
    primary: &TransportMap,
    secondary: Option<&TransportMap>,
) -> gaussot::Result<InequalityReport> {
    let rule = scn.rule();
    let pair = || secondary.expect("pair presence was validated against solve2");
    match request {
        VerificationRequest::EntropyBalance => {
            inequalities::verify_entropy_balance(primary, pair(), rule)
        }
        VerificationRequest::MapStability { c } => {
            inequalities::verify_map_stability(primary, pair(), c, rule)
        }
        VerificationRequest::SecondOrderBound => {
            inequalities::verify_second_order_bound(primary, rule)
        }
        VerificationRequest::SobolevBound { c } => {
            inequalities::verify_sobolev_bound(primary, c, rule)
        }
        VerificationRequest::ThirdDerivativeBound { c, p } => {
            inequalities::verify_third_derivative_bound(primary, c, p, rule)
        }
        VerificationRequest::HessianStability { c, p, variant } => {
            inequalities::verify_hessian_stability(primary, pair(), c, p, variant, rule)
        }
        VerificationRequest::Talagrand => inequalities::verify_talagrand(primary, rule),
        VerificationRequest::Poincare { c } => inequalities::verify_poincare(
            primary.target(),
            c,
            &inequalities::poincare_battery(rule.dim()),
            rule,
        ),
        VerificationRequest::MapResidual {
            tolerance,
            range,
            probes_per_axis,
        } => {
            let probes = probe_grid(primary.dim(), range, probes_per_axis);
            inequalities::verify_map_residual(primary, &probes, tolerance)
        }
    }
}

/// Summarizes one solved map: its cost and how well it pushes the source
/// onto the target over the observable battery.
pub fn map_report(
    role: &str,
    def_backend: &str,
    map: &TransportMap,
    rule: &QuadratureRule,
) -> ConfigResult<MapReport> {
    let w2_sq = functionals::w2_cost_from_map(map, map.source(), rule)
        .map_err(|err| ConfigError(format!("{role} map cost: {err}")))?;
    let pushforward = transport::pushforward_check(map, rule)
        .map_err(|err| ConfigError(format!("{role} map pushforward: {err}")))?;
    Ok(MapReport {
        role: role.to_owned(),
        backend: def_backend.to_owned(),
        dim: map.dim(),
        w2_sq,
        pushforward,
    })
}

/// Solves a scenario's maps and runs its verifications, optionally filtered
/// to the kinds in `only`. Verifications run concurrently; the report lists
/// them sorted by name regardless of completion order.
pub fn run_scenario(scn: &Scenario, only: Option<&[String]>) -> ConfigResult<RunReport> {
    let start = Instant::now();
    let selected: Vec<VerificationRequest> = match only {
        None => scn.requests().to_vec(),
        Some(tags) => {
            for tag in tags {
                if !scn.requests().iter().any(|r| r.kind() == tag) {
                    return bad(format!(
                        "--only: scenario {:?} has no verification {tag:?}",
                        scn.name()
                    ));
                }
            }
            scn.requests()
                .iter()
                .copied()
                .filter(|r| tags.iter().any(|t| t == r.kind()))
                .collect()
        }
    };

    let solve_start = Instant::now();
    let primary = scn.solve_primary()?;
    let secondary = scn.solve_secondary()?;
    let solve_ms = elapsed_ms(solve_start);

    let mut maps = vec![map_report(
        "primary",
        &scn.file().solve.backend,
        &primary,
        scn.rule(),
    )?];
    if let Some(map2) = &secondary {
        let backend = &scn.file().solve2.as_ref().expect("solved above").backend;
        maps.push(map_report("secondary", backend, map2, scn.rule())?);
    }

    let mut slots: Vec<Option<(gaussot::Result<InequalityReport>, f64)>> =
        selected.iter().map(|_| None).collect();
    std::thread::scope(|scope| {
        let primary = &primary;
        let secondary = secondary.as_ref();
        for (slot, request) in slots.iter_mut().zip(&selected) {
            scope.spawn(move || {
                let begun = Instant::now();
                let result = run_request(scn, *request, primary, secondary);
                *slot = Some((result, elapsed_ms(begun)));
            });
        }
    });

    let mut verifications = Vec::with_capacity(selected.len());
    let mut verify_ms = BTreeMap::new();
    for (slot, request) in slots.into_iter().zip(&selected) {
        let (result, ms) = slot.expect("every spawned verification fills its slot");
        let report = result
            .map_err(|err| ConfigError(format!("verification {}: {err}", request.kind())))?;
        verify_ms.insert(request.kind().to_owned(), ms);
        verifications.push(report);
    }
    verifications.sort_by(|x, y| x.name.cmp(&y.name));

    let mut per_verification = BTreeMap::new();
    for report in &verifications {
        let worst = report
            .items
            .iter()
            .map(|item| item.scaled_truncation())
            .fold(0.0, f64::max);
        per_verification.insert(report.name.clone(), worst);
    }
    let worst_scaled = per_verification.values().copied().fold(0.0, f64::max);

    Ok(RunReport {
        artifact_version: env!("CARGO_PKG_VERSION").to_owned(),
        scenario: scn.file().clone(),
        maps,
        verifications,
        truncation: TruncationSummary {
            worst_scaled,
            per_verification,
        },
        timings: Timings {
            solve_ms,
            verify_ms,
            total_ms: elapsed_ms(start),
        },
    })
}

/// One row of the Monge–Ampère residual table.
pub struct ResidualRow {
    pub point: Vec<f64>,
    pub residual: f64,
}

/// Evaluates the pointwise residual of the primary map on a tensor grid and
/// returns the rows together with the sup over them.
pub fn residual_table(
    scn: &Scenario,
    per_axis: usize,
    range: f64,
) -> ConfigResult<(Vec<ResidualRow>, f64)> {
    if per_axis < 2 {
        return bad(format!("--grid: need at least 2 points, got {per_axis}"));
    }
    if !(range > 0.0 && range.is_finite()) {
        return bad(format!("--range: must be positive, got {range}"));
    }
    let map = scn.solve_primary()?;
    let (v, w) = (map.source(), map.target());
    let mut rows = Vec::new();
    let mut sup = 0.0f64;
    for point in probe_grid(scn.dim(), range, per_axis) {
        let residual = functionals::ma_residual(v, w, &map, &point)
            .map_err(|err| ConfigError(format!("residual at {point:?}: {err}")))?;
        sup = sup.max(residual.abs());
        rows.push(ResidualRow { point, residual });
    }
    Ok((rows, sup))
}

pub fn residual_csv(scn: &Scenario, rows: &[ResidualRow]) -> String {
    let mut out = String::new();
    for i in 0..scn.dim() {
        let _ = write!(out, "x{},", i + 1);
    }
    out.push_str("residual\n");
    for row in rows {
        for value in &row.point {
            let _ = write!(out, "{value:.16e},");
        }
        let _ = writeln!(out, "{:.16e}", row.residual);
    }
    out
}

/// One level of the projection tower driven by `--lambdas`.
pub struct TowerRow {
    pub n: usize,
    pub w2_sq: f64,
    pub alpha_n: f64,
    /// |Π axis masses − 1| of the level target; its components are
    /// individually normalized, so separability makes this a rounding probe.
    pub mass_error: f64,
}

/// Builds the tower between γ and the separable quadratic target with the
/// given per-axis coefficients.
pub fn tower_rows(lambdas: &[f64], quad_order: usize) -> ConfigResult<Vec<TowerRow>> {
    let spec = SeparableQuadraticSpec::new(lambdas.to_vec())
        .map_err(|err| ConfigError(format!("--lambdas: {err}")))?;
    let axis_rule = quadrature::gauss_hermite(1, quad_order)
        .map_err(|err| ConfigError(format!("--quad-order: {err}")))?;
    let source = Potential::zero(spec.len());
    let target = spec.full_potential();
    let levels = tower::tower_w2_sequence(&source, &target, &QuantileParams::default(), &axis_rule)
        .map_err(|err| ConfigError(format!("tower: {err}")))?;
    levels
        .iter()
        .map(|level| tower_row(level, &axis_rule))
        .collect()
}

fn tower_row(level: &TowerLevel, axis_rule: &QuadratureRule) -> ConfigResult<TowerRow> {
    let mut mass = 1.0f64;
    let components = level
        .w_n
        .coordinate_components()
        .map_err(|err| ConfigError(format!("tower level {}: {err}", level.n)))?;
    for component in &components {
        mass *= quadrature::integrate_weighted(axis_rule, component, |_| 1.0)
            .map_err(|err| ConfigError(format!("tower level {}: {err}", level.n)))?;
    }
    Ok(TowerRow {
        n: level.n,
        w2_sq: level.w2_sq,
        alpha_n: level.alpha_n,
        mass_error: (mass - 1.0).abs(),
    })
}

pub fn tower_csv(rows: &[TowerRow]) -> String {
    let mut out = String::from("n,w2_sq,alpha_n,mass_error\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e}",
            row.n, row.w2_sq, row.alpha_n, row.mass_error
        );
    }
    out
}

/// One row of a dimension sweep.
pub struct SweepRow {
    pub dim: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub slack_per_dim: f64,
}

/// Scales a one-dimensional scenario across product dimensions. The swept
/// relation must be coordinate-additive; each row folds per-coordinate
/// verifications of independently re-solved 1D maps, left to right.
pub fn sweep_rows(scn: &Scenario, dims: &[usize]) -> ConfigResult<Vec<SweepRow>> {
    if scn.dim() != 1 {
        return bad(format!(
            "sweep: base scenario must have dim 1, {:?} has dim {}",
            scn.name(),
            scn.dim()
        ));
    }
    let Some(request) = scn.requests().first().copied() else {
        return bad("sweep: base scenario declares no verifications");
    };
    let additive = matches!(
        request,
        VerificationRequest::SobolevBound { .. }
            | VerificationRequest::SecondOrderBound
            | VerificationRequest::Talagrand
    );
    if !additive {
        return bad(format!(
            "sweep: first verification {:?} is not coordinate-additive; \
             use sobolev-bound, second-order-bound, or talagrand",
            request.kind()
        ));
    }
    if dims.is_empty() {
        return bad("--dims: need at least one dimension");
    }
    for &d in dims {
        if d == 0 {
            return bad("--dims: dimensions must be at least 1");
        }
    }

    let max_dim = dims.iter().copied().max().expect("nonempty");
    let mut axis_reports = Vec::with_capacity(max_dim);
    for _ in 0..max_dim {
        let map = scn.solve_primary()?;
        let report = run_request(scn, request, &map, None)
            .map_err(|err| ConfigError(format!("verification {}: {err}", request.kind())))?;
        axis_reports.push(report);
    }

    let rows = dims
        .iter()
        .map(|&d| {
            let mut lhs = 0.0;
            let mut rhs = 0.0;
            for report in &axis_reports[..d] {
                lhs += report.lhs;
                rhs += report.rhs;
            }
            let slack = lhs - rhs;
            SweepRow {
                dim: d,
                lhs,
                rhs,
                slack,
                slack_per_dim: slack / d as f64,
            }
        })
        .collect();
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("dim,lhs,rhs,slack,slack_per_dim\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e}",
            row.dim, row.lhs, row.rhs, row.slack, row.slack_per_dim
        );
    }
    out
}

/// Combined matrix battery results.
#[derive(Serialize)]
pub struct MatrixBatteries {
    pub dims: Vec<usize>,
    pub per_dim: usize,
    pub seed: u64,
    pub t_order: usize,
    pub bound: BoundBattery,
    pub identity: IdentityBattery,
}

pub fn matrix_batteries(
    dims: &[usize],
    per_dim: usize,
    seed: u64,
    t_order: usize,
) -> ConfigResult<MatrixBatteries> {
    let bound = matrix_lemmas::bound_battery(dims, per_dim, seed)
        .map_err(|err| ConfigError(format!("bound battery: {err}")))?;
    let identity = matrix_lemmas::identity_battery(dims, per_dim, seed, t_order)
        .map_err(|err| ConfigError(format!("identity battery: {err}")))?;
    Ok(MatrixBatteries {
        dims: dims.to_vec(),
        per_dim,
        seed,
        t_order,
        bound,
        identity,
    })
}

/// Merges verification reports into one document, sorted by scenario name.
/// Two reports for the same scenario are a configuration error.
pub fn merge_reports(inputs: &[(PathBuf, Value)]) -> ConfigResult<Value> {
    let mut named: Vec<(String, &Value)> = Vec::with_capacity(inputs.len());
    for (path, value) in inputs {
        let Some(name) = value
            .get("scenario")
            .and_then(|s| s.get("name"))
            .and_then(Value::as_str)
        else {
            return bad(format!(
                "{}: not a verification report (missing scenario.name)",
                path.display()
            ));
        };
        if named.iter().any(|(n, _)| n == name) {
            return bad(format!(
                "{}: duplicate report for scenario {name:?}",
                path.display()
            ));
        }
        named.push((name.to_owned(), value));
    }
    named.sort_by(|x, y| x.0.cmp(&y.0));
    let reports: Vec<Value> = named.into_iter().map(|(_, v)| v.clone()).collect();
    Ok(serde_json::json!({ "reports": reports }))
}
