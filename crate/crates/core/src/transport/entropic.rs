//! Entropic-regularization solver on a tensor grid.
//!
//! The two weighted measures are discretized on a uniform grid over
//! [−R, R]^d and coupled by Sinkhorn iteration for the cost ½|x−y|² with a
//! decreasing ε schedule (warm-started between levels). All updates run in
//! the log domain. Because the Gibbs kernel factorizes across axes, one
//! dual update is d axis sweeps of shape m × m^{d−1} instead of a dense
//! m^d × m^d pass; each sweep is a stabilized matrix product (per-line max
//! shift, then a GEMM against the axis kernel, then a log). Small ε makes
//! plain Sinkhorn contract at rate 1 − O(ε), so the updates are adaptively
//! overrelaxed, with stall detection that unwinds back to plain steps; on
//! one-axis grids the final ε level is finished by a damped Newton solve of
//! the dual optimality system, which reaches tight marginal tolerances the
//! alternating iteration cannot.
//!
//! The returned map is the barycentric projection x_i ↦ Σ_j y_j π(y_j|x_i),
//! evaluated off-grid by multilinear interpolation with probes clamped to
//! the grid box. Jacobians come from central finite differences of that
//! interpolant and are refused next to the boundary.

use super::{Backend, TransportMap};
use crate::error::Error;
use crate::potentials::Potential;
use crate::quadrature::Accumulator;
use crate::Result;
use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Hard cap on grid nodes m^d.
pub const GRID_BUDGET: usize = 1_000_000;
/// Finite-difference step for Jacobians, as a fraction of the grid radius.
const FD_STEP_FACTOR: f64 = 1e-4;
/// Marginal L¹ tolerance at the final ε level.
pub const DEFAULT_MARGINAL_TOLERANCE: f64 = 1e-8;
/// Marginal L¹ tolerance at intermediate ε levels.
pub const DEFAULT_INTERMEDIATE_TOLERANCE: f64 = 1e-6;
/// Iteration cap per ε level.
pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;
/// Base ε ladder for `default_schedule`.
const LADDER: [f64; 7] = [1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001];

/// Uniform tensor grid on [−radius, radius]^dim.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub radius: f64,
    pub points_per_axis: usize,
}

impl GridSpec {
    pub fn new(dim: usize, radius: f64, points_per_axis: usize) -> Result<GridSpec> {
        if dim == 0 || dim > 3 {
            return Err(Error::invalid("dim", "grid solver supports 1 to 3 dimensions"));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::invalid("radius", "must be positive and finite"));
        }
        if points_per_axis < 4 {
            return Err(Error::invalid("points_per_axis", "need at least 4 points"));
        }
        let nodes = points_per_axis.checked_pow(dim as u32).unwrap_or(usize::MAX);
        if nodes > GRID_BUDGET {
            return Err(Error::NodeBudget {
                nodes: nodes as u64,
                budget: GRID_BUDGET as u64,
            });
        }
        Ok(GridSpec {
            dim,
            radius,
            points_per_axis,
        })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.radius / (self.points_per_axis - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn axis_coord(&self, k: usize) -> f64 {
        -self.radius + k as f64 * self.spacing()
    }

    /// Node coordinates for a flat index; axis 0 varies slowest.
    fn node(&self, flat: usize, out: &mut [f64]) {
        let m = self.points_per_axis;
        let mut rest = flat;
        for a in (0..self.dim).rev() {
            out[a] = self.axis_coord(rest % m);
            rest /= m;
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropicParams {
    /// Strictly decreasing ε levels; the last entry is the solve's ε.
    pub schedule: Vec<f64>,
    pub marginal_tolerance: f64,
    pub intermediate_tolerance: f64,
    pub max_iterations: usize,
}

impl EntropicParams {
    pub fn with_schedule(schedule: Vec<f64>) -> EntropicParams {
        EntropicParams {
            schedule,
            marginal_tolerance: DEFAULT_MARGINAL_TOLERANCE,
            intermediate_tolerance: DEFAULT_INTERMEDIATE_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }

    /// Default ladder for a grid, ending at `final_epsilon` unless the grid
    /// spacing cannot resolve it.
    pub fn for_grid(spec: &GridSpec, final_epsilon: f64) -> EntropicParams {
        EntropicParams::with_schedule(default_schedule(final_epsilon, spec.spacing()))
    }
}

/// The {1, 0.3, 0.1, …} ladder truncated at max(final_epsilon, 4·spacing²):
/// ε below a few spacing² is sub-resolution and only slows convergence.
pub fn default_schedule(final_epsilon: f64, spacing: f64) -> Vec<f64> {
    let floor = final_epsilon.max(4.0 * spacing * spacing);
    let mut out: Vec<f64> = LADDER.iter().copied().filter(|&e| e > floor).collect();
    out.push(floor);
    out
}

/// Solved grid coupling: dual potentials, barycentric map values at the
/// nodes, and convergence diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridMap {
    spec: GridSpec,
    epsilon: f64,
    fd_step: f64,
    marginal_error: f64,
    level_iterations: Vec<usize>,
    potential_f: Vec<f64>,
    potential_g: Vec<f64>,
    /// values[i·d + a] = a-th component of T at node i.
    values: Vec<f64>,
}

impl GridMap {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Row-marginal L¹ error of the final coupling.
    pub fn marginal_error(&self) -> f64 {
        self.marginal_error
    }

    pub fn level_iterations(&self) -> &[usize] {
        &self.level_iterations
    }

    /// Multilinear interpolation of the node map values; probes outside the
    /// grid box are clamped to it.
    pub fn value(&self, x: &[f64]) -> DVector<f64> {
        let d = self.spec.dim;
        let m = self.spec.points_per_axis;
        let h = self.spec.spacing();
        let r = self.spec.radius;
        let mut base = [0usize; 3];
        let mut frac = [0f64; 3];
        for a in 0..d {
            let pos = (x[a].clamp(-r, r) + r) / h;
            let i = (pos.floor() as usize).min(m - 2);
            base[a] = i;
            frac[a] = (pos - i as f64).clamp(0.0, 1.0);
        }
        let mut out = DVector::zeros(d);
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0usize;
            for a in 0..d {
                let bit = (corner >> a) & 1;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                flat = flat * m + base[a] + bit;
            }
            if w == 0.0 {
                continue;
            }
            for a in 0..d {
                out[a] += w * self.values[flat * d + a];
            }
        }
        out
    }

    /// Central-difference Jacobian of the interpolated map (raw, not
    /// symmetrized). Probes whose FD stencil leaves the grid box error out.
    pub(crate) fn jacobian_fd(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.spec.dim;
        let h = self.fd_step;
        let r = self.spec.radius;
        for &xa in x.iter().take(d) {
            if xa.abs() + h > r {
                return Err(Error::OutOfDomain {
                    value: xa,
                    lo: -(r - h),
                    hi: r - h,
                });
            }
        }
        let mut probe = x.to_vec();
        let mut jac = DMatrix::zeros(d, d);
        for k in 0..d {
            probe[k] = x[k] + h;
            let plus = self.value(&probe);
            probe[k] = x[k] - h;
            let minus = self.value(&probe);
            probe[k] = x[k];
            for i in 0..d {
                jac[(i, k)] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
        Ok(jac)
    }
}

/// Normalized grid weights of e^{-p}γ (cell volumes cancel).
struct GridMarginal {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

fn discretize(p: &Potential, spec: &GridSpec) -> Result<GridMarginal> {
    let n = spec.len();
    let mut coords = vec![0.0; spec.dim];
    let mut logs = Vec::with_capacity(n);
    for i in 0..n {
        spec.node(i, &mut coords);
        let norm_sq: f64 = coords.iter().map(|c| c * c).sum();
        let lw = -p.value(&coords) - 0.5 * norm_sq;
        if lw.is_nan() || lw == f64::INFINITY {
            return Err(Error::NonFinite {
                context: "grid marginal log-weight",
                value: lw,
            });
        }
        logs.push(lw);
    }
    let mut acc = Accumulator::new();
    for &lw in &logs {
        acc.add(lw.exp());
    }
    let total = acc.total();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Normalization(
            "grid marginal has no usable mass".into(),
        ));
    }
    let log_total = total.ln();
    let weights: Vec<f64> = logs.iter().map(|&lw| (lw - log_total).exp()).collect();
    let log_weights: Vec<f64> = logs.iter().map(|&lw| lw - log_total).collect();
    Ok(GridMarginal {
        weights,
        log_weights,
    })
}

/// Per-axis kernel in linear and log form.
struct KernelPair {
    lin: DMatrix<f64>,
    log: DMatrix<f64>,
}

fn plain_kernel(spec: &GridSpec, eps: f64) -> KernelPair {
    let m = spec.points_per_axis;
    let h = spec.spacing();
    let mut lin = DMatrix::zeros(m, m);
    let mut log = DMatrix::zeros(m, m);
    for i in 0..m {
        for k in 0..m {
            let diff = (i as f64 - k as f64) * h;
            let l = -diff * diff / (2.0 * eps);
            log[(i, k)] = l;
            lin[(i, k)] = l.exp();
        }
    }
    KernelPair { lin, log }
}

/// Kernel weighted by the shifted axis coordinate z_k + R ≥ 0, used for the
/// barycentric numerator along one axis.
fn coord_kernel(spec: &GridSpec, plain: &KernelPair) -> KernelPair {
    let m = spec.points_per_axis;
    let mut lin = plain.lin.clone();
    let mut log = plain.log.clone();
    for k in 0..m {
        let shifted = spec.axis_coord(k) + spec.radius;
        let lshift = shifted.ln();
        for i in 0..m {
            lin[(i, k)] *= shifted;
            log[(i, k)] += lshift;
        }
    }
    KernelPair { lin, log }
}

/// Scratch space shared by all sweeps of one solve.
struct Buffers {
    t_in: Vec<f64>,
    t_out: Vec<f64>,
    /// m × (n/m) gathered lines.
    s: DMatrix<f64>,
    /// GEMM output, same shape.
    p: DMatrix<f64>,
    shifts: Vec<f64>,
}

impl Buffers {
    fn new(m: usize, n: usize) -> Buffers {
        let lines = n / m;
        Buffers {
            t_in: vec![0.0; n],
            t_out: vec![0.0; n],
            s: DMatrix::zeros(m, lines),
            p: DMatrix::zeros(m, lines),
            shifts: vec![0.0; lines],
        }
    }
}

/// One log-sum-exp contraction along `axis`: for every grid line in that
/// direction, out_i = LSE_k(in_k + log kernel[i,k]). Stabilized by the line
/// maximum so the inner double loop is a plain matrix product; entries that
/// underflow to zero fall back to a direct per-entry LSE.
fn sweep_axis(
    m: usize,
    dim: usize,
    axis: usize,
    input: &[f64],
    output: &mut [f64],
    kernel: &KernelPair,
    s: &mut DMatrix<f64>,
    p: &mut DMatrix<f64>,
    shifts: &mut [f64],
) {
    let n = input.len();
    let inner = m.pow((dim - 1 - axis) as u32);
    let lines = n / m;
    for l in 0..lines {
        let base = (l / inner) * m * inner + l % inner;
        let mut mx = f64::NEG_INFINITY;
        for k in 0..m {
            let v = input[base + k * inner];
            if v > mx {
                mx = v;
            }
        }
        shifts[l] = mx;
        if mx == f64::NEG_INFINITY {
            for k in 0..m {
                s[(k, l)] = 0.0;
            }
        } else {
            for k in 0..m {
                s[(k, l)] = (input[base + k * inner] - mx).exp();
            }
        }
    }
    kernel.lin.mul_to(s, p);
    for l in 0..lines {
        let base = (l / inner) * m * inner + l % inner;
        if shifts[l] == f64::NEG_INFINITY {
            for i in 0..m {
                output[base + i * inner] = f64::NEG_INFINITY;
            }
            continue;
        }
        for i in 0..m {
            let v = p[(i, l)];
            // Terms under the line shift can underflow: each contributes at
            // most e⁻⁷⁴⁴ to the product, m of them at most e⁻⁷³⁷. Products
            // above 1e-300 ≈ e⁻⁶⁹¹ therefore carry relative error ≤ e⁻⁴⁶;
            // anything smaller may be pure underflow residue and is
            // recomputed with a per-entry shift.
            output[base + i * inner] = if v > 1e-300 {
                shifts[l] + v.ln()
            } else {
                lse_direct(m, base, inner, input, &kernel.log, i)
            };
        }
    }
}

fn lse_direct(
    m: usize,
    base: usize,
    inner: usize,
    input: &[f64],
    kernel_log: &DMatrix<f64>,
    i: usize,
) -> f64 {
    let mut mx = f64::NEG_INFINITY;
    for k in 0..m {
        let t = input[base + k * inner] + kernel_log[(i, k)];
        if t > mx {
            mx = t;
        }
    }
    if mx == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut sum = 0.0;
    for k in 0..m {
        let t = input[base + k * inner] + kernel_log[(i, k)];
        if t > f64::NEG_INFINITY {
            sum += (t - mx).exp();
        }
    }
    mx + sum.ln()
}

/// Contracts the log tensor in bufs.t_in across every axis, using
/// `coord_axis`'s coordinate kernel there if given. Result stays in t_in.
fn contract(
    m: usize,
    dim: usize,
    plain: &KernelPair,
    coord: Option<(usize, &KernelPair)>,
    bufs: &mut Buffers,
) {
    for axis in 0..dim {
        let kernel = match coord {
            Some((a, k)) if a == axis => k,
            _ => plain,
        };
        sweep_axis(
            m,
            dim,
            axis,
            &bufs.t_in,
            &mut bufs.t_out,
            kernel,
            &mut bufs.s,
            &mut bufs.p,
            &mut bufs.shifts,
        );
        std::mem::swap(&mut bufs.t_in, &mut bufs.t_out);
    }
}

/// f_new_i = −ε·LSE_j(log q_j + g_j/ε − c_ij/ε); symmetric for the g update.
fn dual_update(
    m: usize,
    dim: usize,
    eps: f64,
    log_marginal: &[f64],
    other: &[f64],
    plain: &KernelPair,
    bufs: &mut Buffers,
    out: &mut [f64],
) {
    for i in 0..out.len() {
        bufs.t_in[i] = log_marginal[i] + other[i] / eps;
    }
    contract(m, dim, plain, None, bufs);
    for i in 0..out.len() {
        out[i] = -eps * bufs.t_in[i];
    }
}

/// L¹ distance between the row marginal implied by (f, g) and the source
/// weights, written through the exact row-balancing update f_new.
fn row_error(eps: f64, weights: &[f64], f: &[f64], f_new: &[f64]) -> f64 {
    let mut acc = Accumulator::new();
    for i in 0..weights.len() {
        let arg = ((f[i] - f_new[i]) / eps).clamp(-30.0, 30.0);
        acc.add(weights[i] * (arg.exp() - 1.0).abs());
    }
    acc.total()
}

fn relax(current: &mut [f64], update: &[f64], omega: f64) {
    if omega == 1.0 {
        current.copy_from_slice(update);
    } else {
        for i in 0..current.len() {
            current[i] = (1.0 - omega) * current[i] + omega * update[i];
        }
    }
}

/// Factors beyond this sit close enough to 2 that the nonlinear iteration can
/// settle on a limit cycle instead of contracting; observed directly on 1D
/// problems at small ε, where cycles pin the marginal error orders of
/// magnitude above tolerance.
const OMEGA_MAX: f64 = 1.7;
/// Ratios averaged before the first jump away from plain iteration.
const OMEGA_WINDOW: usize = 8;
/// Relaxed iterations between rate re-estimates.
const OMEGA_REVIEW: usize = 64;
/// Relaxed iterations without meaningful improvement before backing off.
/// Relaxation excites oscillatory modes that decay like √(ω−1) per step, so
/// transient stretches of a hundred iterations without net progress are
/// normal.
const OMEGA_PATIENCE: usize = 200;
/// Improvement below this fraction of the best error does not reset the
/// patience clock; limit cycles produce endless microscopic new bests.
const OMEGA_PROGRESS: f64 = 1.0 - 1e-3;

/// Backoffs tolerated before the controller gives up on relaxation and locks
/// the level to plain iteration, which is globally convergent.
const OMEGA_BACKOFFS: usize = 2;

/// Overrelaxation controller for the alternating dual updates. The sweep is a
/// two-block Gauss–Seidel pass, so the optimal factor is 2/(1+√(1−ρ)) with ρ
/// the plain contraction ratio. Plain steps estimate ρ from a monotone window
/// of error ratios; afterwards the achieved rate is reviewed periodically and
/// ω is raised while the iteration still sits on the slow real-root branch.
/// Every stall lowers a ceiling the reviews cannot raise ω past again, and
/// repeated stalls lock the level to plain steps: the relaxed iteration can
/// cycle instead of contracting, so it only ever serves as an accelerator.
struct OmegaControl {
    omega: f64,
    ceiling: f64,
    backoffs: usize,
    locked: bool,
    plain_errs: Vec<f64>,
    best: f64,
    since_best: usize,
    ring: Vec<f64>,
    relaxed_steps: usize,
}

impl OmegaControl {
    fn new() -> Self {
        OmegaControl {
            omega: 1.0,
            ceiling: OMEGA_MAX,
            backoffs: 0,
            locked: false,
            plain_errs: Vec::new(),
            best: f64::INFINITY,
            since_best: 0,
            ring: vec![0.0; OMEGA_REVIEW],
            relaxed_steps: 0,
        }
    }

    fn engage(&mut self, omega: f64, err: f64) {
        self.omega = omega;
        self.best = err;
        self.since_best = 0;
        self.relaxed_steps = 0;
    }

    fn lock_plain(&mut self) {
        self.omega = 1.0;
        self.locked = true;
    }

    fn update(&mut self, err: f64) {
        if self.locked {
            return;
        }
        if !err.is_finite() || err <= 0.0 {
            self.lock_plain();
            return;
        }
        if self.omega == 1.0 {
            self.plain_errs.push(err);
            if self.plain_errs.len() > OMEGA_WINDOW + 1 {
                self.plain_errs.remove(0);
            }
            let e = &self.plain_errs;
            if e.len() == OMEGA_WINDOW + 1 && e.windows(2).all(|w| w[1] < w[0]) {
                let rho = (e[e.len() - 1] / e[0]).powf(1.0 / OMEGA_WINDOW as f64);
                // Plain iteration already converges quickly below 0.7; the
                // acceleration only pays off near 1.
                if rho > 0.7 && rho < 1.0 {
                    let omega = (2.0 / (1.0 + (1.0 - rho).sqrt())).clamp(1.0, self.ceiling);
                    self.engage(omega, err);
                }
            }
            return;
        }
        let slot = self.relaxed_steps % OMEGA_REVIEW;
        let past = self.ring[slot];
        self.ring[slot] = err;
        self.relaxed_steps += 1;
        if err < self.best * OMEGA_PROGRESS {
            self.best = err;
            self.since_best = 0;
        } else {
            self.best = self.best.min(err);
            self.since_best += 1;
            if self.since_best >= OMEGA_PATIENCE {
                self.backoffs += 1;
                let omega = 1.0 + (self.omega - 1.0) * 0.7;
                if self.backoffs >= OMEGA_BACKOFFS || omega < 1.05 {
                    self.lock_plain();
                } else {
                    self.ceiling = omega;
                    self.engage(omega, err);
                }
                return;
            }
        }
        if self.relaxed_steps > OMEGA_REVIEW && self.relaxed_steps % OMEGA_REVIEW == 0 {
            let rate = (err / past).powf(1.0 / OMEGA_REVIEW as f64);
            // On the real-root branch the observed rate exceeds ω−1; invert
            // Young's relation (μ+ω−1)² = ω²μρ for ρ and re-aim at its
            // optimum. At the optimum rate ≈ ω−1 and the guard keeps ω put.
            if rate < 1.0 && rate > self.omega - 1.0 + 0.01 {
                let rho = (rate + self.omega - 1.0).powi(2) / (self.omega * self.omega * rate);
                if rho < 1.0 {
                    let omega = (2.0 / (1.0 + (1.0 - rho).sqrt())).clamp(self.omega, self.ceiling);
                    // Re-engaging at an unchanged ω would only reset the
                    // patience clock and mask a stall.
                    if omega > self.omega + 1e-9 {
                        self.engage(omega, err);
                    }
                }
            }
        }
    }
}

/// Row-marginal gap at which the Newton polish takes over on 1D grids.
const NEWTON_ENGAGE: f64 = 1e-3;
/// Largest axis size for which the dense Newton system is worth factoring.
const NEWTON_MAX_GRID: usize = 1024;
const NEWTON_STEPS_MAX: usize = 12;

/// Coupling matrix π_ij = p_i q_j exp((f_i + g_j − C_ij)/ε), assembled in the
/// log domain.
fn fill_plan(
    eps: f64,
    src: &GridMarginal,
    tgt: &GridMarginal,
    kernel: &KernelPair,
    f: &[f64],
    g: &[f64],
    pi: &mut DMatrix<f64>,
) {
    let m = f.len();
    for j in 0..m {
        let col = tgt.log_weights[j] + g[j] / eps;
        for i in 0..m {
            pi[(i, j)] = (src.log_weights[i] + f[i] / eps + kernel.log[(i, j)] + col).exp();
        }
    }
}

fn plan_marginals(pi: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let (m, n) = pi.shape();
    let mut row = vec![0.0; m];
    let mut col = vec![0.0; n];
    for j in 0..n {
        let mut acc = Accumulator::new();
        for i in 0..m {
            acc.add(pi[(i, j)]);
        }
        col[j] = acc.total();
    }
    for (i, r) in row.iter_mut().enumerate() {
        let mut acc = Accumulator::new();
        for j in 0..n {
            acc.add(pi[(i, j)]);
        }
        *r = acc.total();
    }
    (row, col)
}

fn l1_gap(have: &[f64], want: &[f64]) -> f64 {
    let mut acc = Accumulator::new();
    for i in 0..have.len() {
        acc.add((have[i] - want[i]).abs());
    }
    acc.total()
}

/// Damped Newton polish of the dual pair on a 1D grid. The alternating
/// updates contract like 1 − O(ε) near the fixed point, so tight marginal
/// tolerances at small ε sit far beyond the iteration budget (and the
/// overrelaxed variant falls into limit cycles there). One dense Newton step
/// on the optimality system costs an m×m factorization and converges
/// quadratically from the basin the alternating updates reach quickly.
/// Drives the row gap below `target`; false means no further progress.
fn newton_polish(
    eps: f64,
    src: &GridMarginal,
    tgt: &GridMarginal,
    kernel: &KernelPair,
    f: &mut [f64],
    g: &mut [f64],
    target: f64,
) -> bool {
    let m = f.len();
    let mut pi = DMatrix::<f64>::zeros(m, m);
    let mut scaled = DMatrix::<f64>::zeros(m, m);
    let mut transposed = DMatrix::<f64>::zeros(m, m);
    let mut schur = DMatrix::<f64>::zeros(m, m);
    let mut trial_f = vec![0.0; m];
    let mut trial_g = vec![0.0; m];
    for _ in 0..NEWTON_STEPS_MAX {
        fill_plan(eps, src, tgt, kernel, f, g, &mut pi);
        let (row, col) = plan_marginals(&pi);
        if row.iter().any(|&r| !(r > 0.0)) {
            return false;
        }
        let row_gap = l1_gap(&row, &src.weights);
        if row_gap <= target {
            return true;
        }
        let err = row_gap + l1_gap(&col, &tgt.weights);
        // Schur complement on the column block: S = diag(col) − πᵀ D_row⁻¹ π,
        // positive semidefinite with the constant dual shift as null space.
        scaled.copy_from(&pi);
        for i in 0..m {
            let inv = 1.0 / row[i];
            for j in 0..m {
                scaled[(i, j)] *= inv;
            }
        }
        // Explicit transpose keeps the product on the fast GEMM path.
        pi.transpose_to(&mut transposed);
        transposed.mul_to(&scaled, &mut schur);
        schur.neg_mut();
        let ridge = 1e-12 * col.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
        for j in 0..m {
            schur[(j, j)] += col[j] + ridge;
        }
        let mut rhs = DVector::<f64>::zeros(m);
        for j in 0..m {
            rhs[j] = tgt.weights[j] - col[j];
        }
        let mut row_res = DVector::<f64>::zeros(m);
        for i in 0..m {
            row_res[i] = (src.weights[i] - row[i]) / row[i];
        }
        rhs -= pi.tr_mul(&row_res);
        let chol = match Cholesky::new(schur.clone()) {
            Some(c) => c,
            None => return false,
        };
        let dv = chol.solve(&rhs);
        let pdv = &pi * &dv;
        let mut du = DVector::<f64>::zeros(m);
        for i in 0..m {
            du[i] = (src.weights[i] - row[i] - pdv[i]) / row[i];
        }
        // Duals move by ε·δ; backtrack on the total marginal gap.
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..4 {
            for i in 0..m {
                trial_f[i] = f[i] + eps * alpha * du[i];
                trial_g[i] = g[i] + eps * alpha * dv[i];
            }
            fill_plan(eps, src, tgt, kernel, &trial_f, &trial_g, &mut pi);
            let (trow, tcol) = plan_marginals(&pi);
            let terr = l1_gap(&trow, &src.weights) + l1_gap(&tcol, &tgt.weights);
            if terr < err {
                f.copy_from_slice(&trial_f);
                g.copy_from_slice(&trial_g);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return false;
        }
    }
    false
}

/// Solves the grid-discretized entropic problem between e^{-V}γ and e^{-W}γ
/// and returns the barycentric-projection map. The coupling satisfies the
/// source (row) marginal to `marginal_tolerance` in L¹ at the final ε.
pub fn solve_entropic_grid(
    source: &Potential,
    target: &Potential,
    spec: &GridSpec,
    params: &EntropicParams,
) -> Result<TransportMap> {
    if source.dim() != spec.dim {
        return Err(Error::DimMismatch {
            expected: spec.dim,
            got: source.dim(),
        });
    }
    if target.dim() != spec.dim {
        return Err(Error::DimMismatch {
            expected: spec.dim,
            got: target.dim(),
        });
    }
    if params.schedule.is_empty() {
        return Err(Error::invalid("schedule", "needs at least one ε level"));
    }
    for pair in params.schedule.windows(2) {
        if !(pair[1] < pair[0]) {
            return Err(Error::invalid("schedule", "ε levels must strictly decrease"));
        }
    }
    let last = *params.schedule.last().unwrap();
    if !(last > 0.0) || !params.schedule[0].is_finite() {
        return Err(Error::invalid("schedule", "ε levels must be positive and finite"));
    }
    if !(params.marginal_tolerance > 0.0) || !(params.intermediate_tolerance > 0.0) {
        return Err(Error::invalid("tolerance", "must be positive"));
    }
    if params.max_iterations == 0 {
        return Err(Error::invalid("max_iterations", "must be at least 1"));
    }

    let src = discretize(source, spec)?;
    let tgt = discretize(target, spec)?;
    let m = spec.points_per_axis;
    let dim = spec.dim;
    let n = spec.len();

    let mut bufs = Buffers::new(m, n);
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut f_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut level_iterations = Vec::with_capacity(params.schedule.len());
    let mut final_error = f64::INFINITY;

    for (level, &eps) in params.schedule.iter().enumerate() {
        let plain = plain_kernel(spec, eps);
        let final_level = level + 1 == params.schedule.len();
        let tol = if final_level {
            params.marginal_tolerance
        } else {
            params.intermediate_tolerance
        };
        let mut control = OmegaControl::new();
        // The polish is only worth its dense factorizations where the
        // alternating iteration genuinely cannot finish: the last (smallest)
        // ε level under a tight tolerance.
        let mut newton = final_level && dim == 1 && m <= NEWTON_MAX_GRID;
        let mut last_err = f64::INFINITY;
        let mut done = false;
        for iter in 1..=params.max_iterations {
            dual_update(m, dim, eps, &tgt.log_weights, &g, &plain, &mut bufs, &mut f_new);
            let err = row_error(eps, &src.weights, &f, &f_new);
            if err <= tol {
                f.copy_from_slice(&f_new);
                dual_update(m, dim, eps, &src.log_weights, &f, &plain, &mut bufs, &mut g_new);
                g.copy_from_slice(&g_new);
                // Relaxation can overshoot; confirm on the settled pair.
                dual_update(m, dim, eps, &tgt.log_weights, &g, &plain, &mut bufs, &mut f_new);
                let confirmed = row_error(eps, &src.weights, &f, &f_new);
                if confirmed <= tol {
                    level_iterations.push(iter);
                    final_error = confirmed;
                    done = true;
                    break;
                }
            }
            if newton && err <= NEWTON_ENGAGE {
                last_err = err;
                if newton_polish(eps, &src, &tgt, &plain, &mut f, &mut g, 0.5 * tol) {
                    continue;
                }
                newton = false;
            }
            control.update(err);
            last_err = err;
            relax(&mut f, &f_new, control.omega);
            dual_update(m, dim, eps, &src.log_weights, &f, &plain, &mut bufs, &mut g_new);
            relax(&mut g, &g_new, control.omega);
        }
        if !done {
            return Err(Error::SinkhornStalled {
                epsilon: eps,
                iterations: params.max_iterations as u64,
                error: last_err,
                target: tol,
            });
        }
    }
    for value in f.iter().chain(g.iter()) {
        if !value.is_finite() {
            return Err(Error::NonFinite {
                context: "entropic dual potential",
                value: *value,
            });
        }
    }

    let eps = last;
    let plain = plain_kernel(spec, eps);
    let coord = coord_kernel(spec, &plain);
    // Conditional-mean map: T_a(x_i) = num_a,i / den_i − R with the
    // coordinate kernel (z+R ≥ 0 keeps the contraction sign-free).
    let mut u = vec![0.0; n];
    for i in 0..n {
        u[i] = tgt.log_weights[i] + g[i] / eps;
    }
    bufs.t_in.copy_from_slice(&u);
    contract(m, dim, &plain, None, &mut bufs);
    let den_log = bufs.t_in.clone();
    let mut values = vec![0.0; n * dim];
    for a in 0..dim {
        bufs.t_in.copy_from_slice(&u);
        contract(m, dim, &plain, Some((a, &coord)), &mut bufs);
        for i in 0..n {
            let v = (bufs.t_in[i] - den_log[i]).exp() - spec.radius;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "barycentric projection value",
                    value: v,
                });
            }
            values[i * dim + a] = v;
        }
    }

    let grid_map = GridMap {
        spec: spec.clone(),
        epsilon: eps,
        fd_step: FD_STEP_FACTOR * spec.radius,
        marginal_error: final_error,
        level_iterations,
        potential_f: f,
        potential_g: g,
        values,
    };
    Ok(TransportMap::new(
        dim,
        source.clone(),
        target.clone(),
        Backend::EntropicGrid(grid_map),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{map_jacobian, map_value, Backend};
    use nalgebra::{DMatrix, DVector};

    fn n02() -> Potential {
        Potential::quadratic(DMatrix::from_element(1, 1, -0.5), DVector::zeros(1), 0.0).unwrap()
    }

    fn grid_map(map: &TransportMap) -> &GridMap {
        match map.backend() {
            Backend::EntropicGrid(g) => g,
            _ => panic!("expected entropic backend"),
        }
    }

    #[test]
    fn default_schedule_floors_at_grid_resolution() {
        let s = default_schedule(1e-3, 0.1);
        let floor = 4.0 * 0.1 * 0.1;
        assert!((s.last().unwrap() - floor).abs() < 1e-15);
        for pair in s.windows(2) {
            assert!(pair[1] < pair[0]);
        }
        let t = default_schedule(1e-3, 0.005);
        assert_eq!(t.last().copied(), Some(1e-3));
        assert_eq!(t.len(), 7);
    }

    #[test]
    fn equal_measures_give_near_identity_map() {
        let v = Potential::zero(1);
        let spec = GridSpec::new(1, 5.0, 896).unwrap();
        let params = EntropicParams::for_grid(&spec, 5e-4);
        let map = solve_entropic_grid(&v, &v, &spec, &params).unwrap();
        let g = grid_map(&map);
        assert!(g.marginal_error() <= 1e-8, "marginal {}", g.marginal_error());
        let mut worst: f64 = 0.0;
        for i in 0..=40 {
            let x = -2.0 + 0.1 * i as f64;
            let t = map_value(&map, &[x]).unwrap()[0];
            worst = worst.max((t - x).abs());
        }
        assert!(worst <= 1e-3, "sup deviation {worst}");
    }

    #[test]
    fn gaussian_scaling_map_in_one_dim() {
        let v = Potential::zero(1);
        let spec = GridSpec::new(1, 6.0, 769).unwrap();
        let params = EntropicParams::with_schedule(vec![1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 1e-3]);
        let map = solve_entropic_grid(&v, &n02(), &spec, &params).unwrap();
        let g = grid_map(&map);
        assert!(g.marginal_error() <= 1e-8);
        let root2 = 2.0f64.sqrt();
        let mut worst: f64 = 0.0;
        for i in 0..=60 {
            let x = -3.0 + 0.1 * i as f64;
            let t = map_value(&map, &[x]).unwrap()[0];
            worst = worst.max((t - root2 * x).abs());
        }
        assert!(worst <= 1e-2, "sup deviation {worst}");
        let jac = map_jacobian(&map, &[0.5]).unwrap();
        assert!((jac[(0, 0)] - root2).abs() <= 5e-3, "slope {}", jac[(0, 0)]);
    }

    #[test]
    fn two_dim_solve_reports_convergence_per_level() {
        let v = Potential::zero(2);
        let spec = GridSpec::new(2, 5.0, 48).unwrap();
        let params = EntropicParams::for_grid(&spec, 0.05);
        let map = solve_entropic_grid(&v, &v, &spec, &params).unwrap();
        let g = grid_map(&map);
        assert_eq!(g.level_iterations().len(), params.schedule.len());
        assert!(g.marginal_error() <= 1e-8);
        // Shrink bias at this ε stays visibly below the grid spacing.
        let t = map_value(&map, &[1.5, -1.0]).unwrap();
        assert!((t[0] - 1.5).abs() <= 0.2 && (t[1] + 1.0).abs() <= 0.2);
        let jac = map_jacobian(&map, &[0.4, 0.3]).unwrap();
        assert!((jac[(0, 0)] - 1.0).abs() <= 0.2);
    }

    #[test]
    fn jacobian_stencil_refused_at_the_boundary() {
        let v = Potential::zero(1);
        let spec = GridSpec::new(1, 4.0, 65).unwrap();
        let params = EntropicParams::for_grid(&spec, 0.1);
        let map = solve_entropic_grid(&v, &v, &spec, &params).unwrap();
        assert!(map_jacobian(&map, &[3.9999]).is_err());
        assert!(map_jacobian(&map, &[3.5]).is_ok());
    }

    #[test]
    fn stalls_with_tiny_iteration_budget() {
        let v = Potential::zero(1);
        let spec = GridSpec::new(1, 4.0, 65).unwrap();
        let mut params = EntropicParams::with_schedule(vec![0.5]);
        params.max_iterations = 2;
        params.marginal_tolerance = 1e-13;
        let err = solve_entropic_grid(&v, &n02(), &spec, &params).unwrap_err();
        assert!(matches!(err, Error::SinkhornStalled { .. }));
    }

    #[test]
    fn rejects_bad_configurations() {
        let v = Potential::zero(2);
        assert!(GridSpec::new(2, 5.0, 1001).is_err());
        assert!(GridSpec::new(4, 5.0, 8).is_err());
        let spec = GridSpec::new(2, 5.0, 16).unwrap();
        let empty = EntropicParams::with_schedule(vec![]);
        assert!(solve_entropic_grid(&v, &v, &spec, &empty).is_err());
        let rising = EntropicParams::with_schedule(vec![0.1, 0.5]);
        assert!(solve_entropic_grid(&v, &v, &spec, &rising).is_err());
        let wrong_dim = Potential::zero(1);
        let ok = EntropicParams::with_schedule(vec![0.5]);
        assert!(solve_entropic_grid(&wrong_dim, &v, &spec, &ok).is_err());
    }
}
