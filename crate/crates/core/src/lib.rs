//! Numerical laboratory for optimal transport between measures of the form
//! e^{-V}γ on R^d, where γ is the standard Gaussian.
//!
//! The library solves for Brenier maps T(x) = x + ∇φ(x) pushing e^{-V}γ to
//! e^{-W}γ (closed form for Gaussian pairs, quantile coupling in 1D, entropic
//! regularization on grids), evaluates the functionals that appear in the
//! associated Sobolev-type estimates (relative entropy, Fisher information,
//! Fredholm–Carleman determinants, the Ornstein–Uhlenbeck operator), and
//! checks the estimates themselves at explicit tolerances with itemized
//! error reporting.

pub mod error;
pub mod fields;
pub mod functionals;
pub mod inequalities;
pub mod linalg;
pub mod matrix_lemmas;
pub mod potentials;
pub mod quadrature;
pub mod semigroup;
pub mod tower;
pub mod transport;

pub use error::Error;

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
