//! Gauss–Hermite quadrature against the standard Gaussian measure γ on R^d,
//! plus the Gauss–Legendre line rule used for parameter integrals.
//!
//! Rules use the probabilists' convention: a 1D rule of order n integrates
//! polynomials of degree ≤ 2n−1 against γ(dx) = (2π)^{-1/2} e^{-x²/2} dx
//! exactly. Multivariate rules are tensor products (dim ≤ 4). All reductions
//! use compensated summation in a fixed node order so results are
//! reproducible bit for bit.

use crate::error::Error;
use crate::potentials::Potential;
use crate::Result;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Hard cap on tensor-rule size.
pub const NODE_BUDGET: u64 = 10_000_000;

/// Default points-per-axis by dimension: accuracy targets for the analytic
/// integrands in this crate while keeping tensor sizes manageable.
pub fn default_order(dim: usize) -> usize {
    match dim {
        1 => 60,
        2 => 40,
        3 => 24,
        _ => 12,
    }
}

/// Tensor-product Gauss–Hermite rule for ∫ f dγ on R^dim.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    dim: usize,
    order: usize,
    /// Per-axis nodes (length `order`), ascending.
    axis_nodes: Vec<f64>,
    /// Per-axis weights (length `order`), positive, summing to 1.
    axis_weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Total number of tensor nodes (order^dim).
    pub fn len(&self) -> usize {
        self.order.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn axis_nodes(&self) -> &[f64] {
        &self.axis_nodes
    }

    pub fn axis_weights(&self) -> &[f64] {
        &self.axis_weights
    }

    /// Writes the coordinates of tensor node `index` into `out` and returns
    /// its weight. Index order is row-major: the last axis varies fastest.
    pub fn node(&self, index: usize, out: &mut [f64]) -> f64 {
        debug_assert_eq!(out.len(), self.dim);
        let mut rem = index;
        let mut weight = 1.0;
        for axis in (0..self.dim).rev() {
            let i = rem % self.order;
            rem /= self.order;
            out[axis] = self.axis_nodes[i];
            weight *= self.axis_weights[i];
        }
        weight
    }

    /// Same rule with `extra` more points per axis; used for truncation-error
    /// estimates.
    pub fn refined(&self, extra: usize) -> Result<QuadratureRule> {
        gauss_hermite(self.dim, self.order + extra)
    }
}

/// Probabilists' Gauss–Hermite rule by Golub–Welsch: nodes are eigenvalues of
/// the Jacobi matrix for the monic Hermite recurrence He_{k+1} = x·He_k −
/// k·He_{k−1} (zero diagonal, off-diagonal √k), weights are squared first
/// components of the normalized eigenvectors. Nodes and weights are
/// symmetrized about 0, which the exact rule satisfies identically.
pub fn gauss_hermite(dim: usize, order: usize) -> Result<QuadratureRule> {
    if dim == 0 || dim > 4 {
        return Err(Error::TensorDim(dim));
    }
    if order == 0 {
        return Err(Error::invalid("order", "quadrature order must be >= 1"));
    }
    let nodes = (order as u64).pow(dim as u32);
    if nodes > NODE_BUDGET {
        return Err(Error::NodeBudget {
            nodes,
            budget: NODE_BUDGET,
        });
    }
    let (axis_nodes, axis_weights) = hermite_axis(order);
    Ok(QuadratureRule {
        dim,
        order,
        axis_nodes,
        axis_weights,
    })
}

/// Values (p_{n-1}(x), p_n(x)) of the orthonormal Hermite polynomials under
/// the recurrence p_{k+1} = (x·p_k − √k·p_{k−1})/√(k+1), rescaled whenever the
/// magnitude passes 1e150 so the outermost nodes of high-order rules do not
/// overflow. The returned log_scale restores true magnitudes; the ratio
/// value/below is scale free. The derivative identity p_n' = √n·p_{n−1}
/// drives both the Newton polish and the weight formula in `hermite_axis`.
fn hermite_pair(order: usize, x: f64) -> (f64, f64, f64) {
    let mut below = 1.0f64;
    let mut value = x;
    let mut log_scale = 0.0f64;
    for k in 1..order {
        let next = (x * value - (k as f64).sqrt() * below) / ((k + 1) as f64).sqrt();
        below = value;
        value = next;
        let magnitude = below.abs().max(value.abs());
        if magnitude > 1e150 {
            below /= magnitude;
            value /= magnitude;
            log_scale += magnitude.ln();
        }
    }
    (below, value, log_scale)
}

fn hermite_axis(order: usize) -> (Vec<f64>, Vec<f64>) {
    if order == 1 {
        return (vec![0.0], vec![1.0]);
    }
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let b = (k as f64).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eigen = jacobi.symmetric_eigen();
    // The eigensolver locates the nodes well, but its first eigenvector
    // components lose relative accuracy exactly where the weights are tiny,
    // which ruins integrands that grow toward the boundary. Polish each node
    // with Newton on the orthonormal recurrence and take the weight from the
    // Christoffel–Darboux sum 1/Σ p_k(x)² = 1/(n·p_{n−1}(x)²), which stays
    // accurate at every node.
    let nf = order as f64;
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| {
            let mut x = eigen.eigenvalues[i];
            for _ in 0..3 {
                let (below, value, _) = hermite_pair(order, x);
                let step = value / (nf.sqrt() * below);
                x -= step;
                if step.abs() <= 1e-15 * x.abs().max(1.0) {
                    break;
                }
            }
            let (below, _, log_scale) = hermite_pair(order, x);
            let weight = if log_scale == 0.0 {
                1.0 / (nf * below * below)
            } else {
                // Rescaled evaluation: recover the weight in log space. Tail
                // weights underflow to zero here, which is their true size.
                (-(nf.ln() + 2.0 * (below.abs().ln() + log_scale))).exp()
            };
            (x, weight)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    // The exact rule is symmetric about the origin; averaging mirrored pairs
    // removes eigensolver noise and makes the symmetry invariant exact.
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        nodes[i] = -x;
        nodes[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
        weights[n / 2] = pairs[n / 2].1;
    }
    let total: f64 = kahan_sum(weights.iter().copied());
    for w in &mut weights {
        *w /= total;
    }
    (nodes, weights)
}

/// Gauss–Legendre rule on [0,1] (nodes, weights), weights summing to 1.
/// Used for the auxiliary t-integrals in identity and lemma checks.
pub fn gauss_legendre_01(order: usize) -> Result<Vec<(f64, f64)>> {
    if order == 0 {
        return Err(Error::invalid("order", "quadrature order must be >= 1"));
    }
    if order == 1 {
        return Ok(vec![(0.5, 1.0)]);
    }
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eigen = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| {
            let node = eigen.eigenvalues[i];
            let first = eigen.eigenvectors[(0, i)];
            // Weight on [−1,1] is 2·v₀²; mapping to [0,1] halves it.
            ((node + 1.0) * 0.5, first * first)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = kahan_sum(pairs.iter().map(|p| p.1));
    for p in &mut pairs {
        p.1 /= total;
    }
    Ok(pairs)
}

/// Neumaier-compensated sum; the fixed iteration order is the determinism
/// anchor for every reduction in the crate.
pub fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut acc = Accumulator::new();
    for v in values {
        acc.add(v);
    }
    acc.total()
}

/// Streaming compensated accumulator.
#[derive(Debug, Clone, Default)]
pub struct Accumulator {
    sum: f64,
    comp: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Accumulator { sum: 0.0, comp: 0.0 }
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// ∫ f dγ by the rule, reducing in node order with compensated summation.
/// A non-finite integrand value aborts with the offending node index.
pub fn integrate(rule: &QuadratureRule, f: impl FnMut(&[f64]) -> f64) -> Result<f64> {
    let mut f = f;
    let mut x = vec![0.0; rule.dim()];
    let mut acc = Accumulator::new();
    for i in 0..rule.len() {
        let w = rule.node(i, &mut x);
        let v = f(&x);
        if !v.is_finite() {
            return Err(Error::NonFiniteNode { node: i, value: v });
        }
        acc.add(w * v);
    }
    Ok(acc.total())
}

/// ∫ f e^{-V} dγ by the rule.
pub fn integrate_weighted(
    rule: &QuadratureRule,
    v: &Potential,
    f: impl FnMut(&[f64]) -> f64,
) -> Result<f64> {
    if v.dim() != rule.dim() {
        return Err(Error::DimMismatch {
            expected: rule.dim(),
            got: v.dim(),
        });
    }
    let mut f = f;
    integrate(rule, |x| f(x) * (-v.value(x)).exp())
}

/// Seeded Gaussian point cloud. The generator is ChaCha8 keyed by
/// (seed, stream); identical keys reproduce the cloud bit for bit, and
/// distinct streams are independent.
#[derive(Debug, Clone)]
pub struct SampleSet {
    dim: usize,
    count: usize,
    seed: u64,
    stream: u64,
    points: Vec<f64>,
}

impl SampleSet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    /// Compensated sample mean of f over the cloud.
    pub fn mean(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        let mut acc = Accumulator::new();
        for p in self.iter() {
            acc.add(f(p));
        }
        acc.total() / self.count as f64
    }
}

/// Draws `count` standard Gaussian points in R^dim from stream `stream` of
/// the generator keyed by `seed`.
pub fn mc_sample(dim: usize, count: usize, seed: u64, stream: u64) -> Result<SampleSet> {
    if dim == 0 {
        return Err(Error::invalid("dim", "sample dimension must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut points = vec![0.0; dim * count];
    for p in points.iter_mut() {
        *p = rand::Rng::sample(&mut rng, rand_distr::StandardNormal);
    }
    Ok(SampleSet {
        dim,
        count,
        seed,
        stream,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn order_two_rule_is_plus_minus_one() {
        let rule = gauss_hermite(1, 2).unwrap();
        assert_abs_diff_eq!(rule.axis_nodes()[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(rule.axis_nodes()[1], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(rule.axis_weights()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rule.axis_weights()[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn order_three_rule_integrates_x4_exactly() {
        let rule = gauss_hermite(1, 3).unwrap();
        let m4 = integrate(&rule, |x| x[0].powi(4)).unwrap();
        assert_abs_diff_eq!(m4, 3.0, epsilon = 1e-12);
        // Nodes of He_3 are 0, ±√3.
        assert_abs_diff_eq!(rule.axis_nodes()[0], -(3.0f64.sqrt()), epsilon = 1e-13);
        assert_abs_diff_eq!(rule.axis_nodes()[1], 0.0, epsilon = 0.0);
    }

    #[test]
    fn gaussian_moments_match_double_factorial() {
        // Degree 2n−2 is within the exactness range of an order-n rule; the
        // moments (2k−1)!! are an independent closed-form oracle.
        for order in 2..=20usize {
            let rule = gauss_hermite(1, order).unwrap();
            let k = order - 1;
            let expected = double_factorial(2 * k - 1);
            let got = integrate(&rule, |x| x[0].powi(2 * k as i32)).unwrap();
            let rel = ((got - expected) / expected).abs();
            assert!(
                rel < 1e-10,
                "order {order}: moment {k} rel error {rel:.3e}"
            );
            let odd = integrate(&rule, |x| x[0].powi(2 * k as i32 - 1)).unwrap();
            assert!(odd.abs() < 1e-10 * expected.max(1.0));
        }
    }

    fn double_factorial(n: usize) -> f64 {
        let mut acc = 1.0;
        let mut k = n as i64;
        while k > 1 {
            acc *= k as f64;
            k -= 2;
        }
        acc
    }

    #[test]
    fn exponential_quadratic_integrand_at_order_40() {
        // ∫ e^{x²/4} dγ = (1 − 2·(1/4))^{-1/2} = √2.
        let rule = gauss_hermite(1, 40).unwrap();
        let got = integrate(&rule, |x| (x[0] * x[0] / 4.0).exp()).unwrap();
        assert_abs_diff_eq!(got, 2.0f64.sqrt(), epsilon = 1e-8);
    }

    #[test]
    fn weights_positive_sum_one_nodes_symmetric() {
        for order in [1usize, 2, 7, 24, 60] {
            let rule = gauss_hermite(1, order).unwrap();
            let sum: f64 = kahan_sum(rule.axis_weights().iter().copied());
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-13);
            for (i, w) in rule.axis_weights().iter().enumerate() {
                assert!(*w > 0.0, "order {order} weight {i} = {w}");
                // Exact mirror symmetry after symmetrization.
                let j = order - 1 - i;
                assert_eq!(*w, rule.axis_weights()[j]);
                assert_eq!(rule.axis_nodes()[i], -rule.axis_nodes()[j]);
            }
        }
    }

    #[test]
    fn tensor_rule_moments_in_two_dims() {
        let rule = gauss_hermite(2, 12).unwrap();
        assert_eq!(rule.len(), 144);
        let m = integrate(&rule, |x| x[0] * x[0] * x[1] * x[1]).unwrap();
        assert_abs_diff_eq!(m, 1.0, epsilon = 1e-12);
        let norm = integrate(&rule, |x| x[0] * x[0] + x[1] * x[1]).unwrap();
        assert_abs_diff_eq!(norm, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn node_budget_and_dim_guards() {
        assert!(matches!(
            gauss_hermite(4, 60),
            Err(Error::NodeBudget { .. })
        ));
        assert!(matches!(gauss_hermite(5, 4), Err(Error::TensorDim(5))));
        assert!(matches!(gauss_hermite(0, 4), Err(Error::TensorDim(0))));
    }

    #[test]
    fn non_finite_integrand_reports_node_index() {
        let rule = gauss_hermite(1, 3).unwrap();
        // Middle node is exactly 0, so 1/x blows up there (index 1).
        let err = integrate(&rule, |x| 1.0 / x[0]).unwrap_err();
        match err {
            Error::NonFiniteNode { node, .. } => assert_eq!(node, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn reduction_order_is_permutation_stable() {
        let rule = gauss_hermite(2, 31).unwrap();
        let f = |x: &[f64]| (x[0] * x[0] / 5.0).exp() * (1.0 + x[1]).cos();
        let direct = integrate(&rule, f).unwrap();

        // Evaluate nodes back to front, then reduce in the fixed order.
        let n = rule.len();
        let mut terms = vec![0.0; n];
        let mut x = vec![0.0; 2];
        for i in (0..n).rev() {
            let w = rule.node(i, &mut x);
            terms[i] = w * f(&x);
        }
        let reduced = kahan_sum(terms.iter().copied());
        assert_eq!(direct.to_bits(), reduced.to_bits());
    }

    #[test]
    fn legendre_rule_matches_power_integrals() {
        let rule = gauss_legendre_01(32).unwrap();
        for k in [0usize, 1, 2, 5, 11, 20] {
            let got = kahan_sum(rule.iter().map(|(t, w)| w * t.powi(k as i32)));
            assert_abs_diff_eq!(got, 1.0 / (k as f64 + 1.0), epsilon = 1e-14);
        }
        let half = kahan_sum(rule.iter().map(|(t, w)| w * (1.0 - t)));
        assert_abs_diff_eq!(half, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn samples_are_reproducible_and_stream_separated() {
        let a = mc_sample(3, 64, 7, 0).unwrap();
        let b = mc_sample(3, 64, 7, 0).unwrap();
        assert_eq!(a.points, b.points);
        let c = mc_sample(3, 64, 7, 1).unwrap();
        assert_ne!(a.points, c.points);
        let d = mc_sample(3, 64, 8, 0).unwrap();
        assert_ne!(a.points, d.points);
    }

    #[test]
    fn sample_moments_within_clt_bounds() {
        let n = 100_000;
        let set = mc_sample(2, n, 42, 0).unwrap();
        let mean0 = set.mean(|p| p[0]);
        let var0 = set.mean(|p| p[0] * p[0]);
        let bound = 4.0 / (n as f64).sqrt();
        assert!(mean0.abs() < bound, "mean {mean0}");
        assert!((var0 - 1.0).abs() < 2.0 * bound, "var {var0}");
    }
}
