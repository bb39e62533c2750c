//! Scalar fields with analytic derivatives.
//!
//! The operator and semigroup code acts on anything exposing value, gradient
//! and Hessian; potentials qualify, and the small expression zoo here covers
//! the observable batteries used by pushforward, Poincaré, and semigroup
//! checks.

use crate::potentials::Potential;
use nalgebra::{DMatrix, DVector};

/// A scalar function R^d → R with analytic first and second derivatives.
pub trait ScalarField {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn grad(&self, x: &[f64]) -> DVector<f64>;
    fn hessian(&self, x: &[f64]) -> DMatrix<f64>;
}

impl ScalarField for Potential {
    fn dim(&self) -> usize {
        Potential::dim(self)
    }

    fn value(&self, x: &[f64]) -> f64 {
        Potential::value(self, x)
    }

    fn grad(&self, x: &[f64]) -> DVector<f64> {
        Potential::grad(self, x)
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        Potential::hessian(self, x)
    }
}

/// Closed-form observables.
#[derive(Debug, Clone)]
pub struct FieldExpr {
    dim: usize,
    kind: ExprKind,
}

#[derive(Debug, Clone)]
enum ExprKind {
    Constant(f64),
    /// x_i
    Coordinate(usize),
    /// x_i²
    CoordinateSquare(usize),
    /// x_i · x_j
    CoordinateProduct(usize, usize),
    /// |x|²
    NormSq,
    /// ½|x|²
    HalfNormSq,
    /// cos⟨u, x⟩
    Cosine(DVector<f64>),
}

impl FieldExpr {
    pub fn constant(dim: usize, c: f64) -> FieldExpr {
        FieldExpr {
            dim,
            kind: ExprKind::Constant(c),
        }
    }

    pub fn coordinate(dim: usize, i: usize) -> FieldExpr {
        assert!(i < dim);
        FieldExpr {
            dim,
            kind: ExprKind::Coordinate(i),
        }
    }

    pub fn coordinate_square(dim: usize, i: usize) -> FieldExpr {
        assert!(i < dim);
        FieldExpr {
            dim,
            kind: ExprKind::CoordinateSquare(i),
        }
    }

    pub fn coordinate_product(dim: usize, i: usize, j: usize) -> FieldExpr {
        assert!(i < dim && j < dim);
        FieldExpr {
            dim,
            kind: ExprKind::CoordinateProduct(i, j),
        }
    }

    pub fn norm_sq(dim: usize) -> FieldExpr {
        FieldExpr {
            dim,
            kind: ExprKind::NormSq,
        }
    }

    pub fn half_norm_sq(dim: usize) -> FieldExpr {
        FieldExpr {
            dim,
            kind: ExprKind::HalfNormSq,
        }
    }

    pub fn cosine(u: DVector<f64>) -> FieldExpr {
        FieldExpr {
            dim: u.len(),
            kind: ExprKind::Cosine(u),
        }
    }
}

impl ScalarField for FieldExpr {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ExprKind::Constant(c) => *c,
            ExprKind::Coordinate(i) => x[*i],
            ExprKind::CoordinateSquare(i) => x[*i] * x[*i],
            ExprKind::CoordinateProduct(i, j) => x[*i] * x[*j],
            ExprKind::NormSq => x.iter().map(|v| v * v).sum(),
            ExprKind::HalfNormSq => 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
            ExprKind::Cosine(u) => x.iter().zip(u.iter()).map(|(a, b)| a * b).sum::<f64>().cos(),
        }
    }

    fn grad(&self, x: &[f64]) -> DVector<f64> {
        let d = self.dim;
        match &self.kind {
            ExprKind::Constant(_) => DVector::zeros(d),
            ExprKind::Coordinate(i) => {
                let mut g = DVector::zeros(d);
                g[*i] = 1.0;
                g
            }
            ExprKind::CoordinateSquare(i) => {
                let mut g = DVector::zeros(d);
                g[*i] = 2.0 * x[*i];
                g
            }
            ExprKind::CoordinateProduct(i, j) => {
                let mut g = DVector::zeros(d);
                g[*i] += x[*j];
                g[*j] += x[*i];
                g
            }
            ExprKind::NormSq => DVector::from_iterator(d, x.iter().map(|v| 2.0 * v)),
            ExprKind::HalfNormSq => DVector::from_column_slice(x),
            ExprKind::Cosine(u) => {
                let dot: f64 = x.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
                u * (-dot.sin())
            }
        }
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        match &self.kind {
            ExprKind::Constant(_) | ExprKind::Coordinate(_) => DMatrix::zeros(d, d),
            ExprKind::CoordinateSquare(i) => {
                let mut h = DMatrix::zeros(d, d);
                h[(*i, *i)] = 2.0;
                h
            }
            ExprKind::CoordinateProduct(i, j) => {
                let mut h = DMatrix::zeros(d, d);
                h[(*i, *j)] += 1.0;
                h[(*j, *i)] += 1.0;
                h
            }
            ExprKind::NormSq => DMatrix::identity(d, d) * 2.0,
            ExprKind::HalfNormSq => DMatrix::identity(d, d),
            ExprKind::Cosine(u) => {
                let dot: f64 = x.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
                u * u.transpose() * (-dot.cos())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cosine_derivatives() {
        let u = DVector::from_vec(vec![0.7, -1.2]);
        let f = FieldExpr::cosine(u.clone());
        let x = [0.4, 0.9];
        let dot: f64 = 0.7 * 0.4 - 1.2 * 0.9;
        assert_abs_diff_eq!(f.value(&x), dot.cos(), epsilon = 1e-15);
        let g = f.grad(&x);
        assert_abs_diff_eq!(g[0], -0.7 * dot.sin(), epsilon = 1e-15);
        let h = f.hessian(&x);
        assert_abs_diff_eq!(h[(0, 1)], -0.7 * (-1.2) * dot.cos(), epsilon = 1e-15);
    }

    #[test]
    fn half_norm_sq_has_identity_hessian() {
        let f = FieldExpr::half_norm_sq(3);
        let x = [1.0, -2.0, 0.5];
        assert_abs_diff_eq!(f.value(&x), 0.5 * (1.0 + 4.0 + 0.25), epsilon = 1e-15);
        assert_eq!(f.hessian(&x), DMatrix::identity(3, 3));
    }
}
