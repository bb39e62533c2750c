use thiserror::Error;

/// Errors shared across the library.
///
/// Numerical code fails in structured ways (dimension mismatches, loss of
/// positivity, probes outside tabulated domains, solvers hitting iteration
/// budgets); each gets its own variant so callers can branch on the cause
/// rather than parse messages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {message}")]
    InvalidParam { name: &'static str, message: String },

    #[error("tensor quadrature supports dim 1..=4, got {0}")]
    TensorDim(usize),

    #[error("quadrature node budget exceeded: {nodes} nodes > {budget}")]
    NodeBudget { nodes: u64, budget: u64 },

    #[error("non-finite value during {context}: {value}")]
    NonFinite { context: &'static str, value: f64 },

    #[error("non-finite integrand value {value} at node {node}")]
    NonFiniteNode { node: usize, value: f64 },

    #[error("normalization failed: {0}")]
    Normalization(String),

    #[error("matrix is not symmetric: max asymmetry {asym:.3e} exceeds {threshold:.3e}")]
    Asymmetric { asym: f64, threshold: f64 },

    #[error("matrix is not positive definite: min eigenvalue {min_eig:.6e}")]
    NotPositiveDefinite { min_eig: f64 },

    #[error("non-positive determinant in regularized determinant")]
    NonPositiveDeterminant,

    #[error("map Jacobian violates convexity: eigenvalue {min_eig:.6e} < -1e-6 at probe")]
    ConvexityViolation { min_eig: f64 },

    #[error("probe {value:.6} outside map domain [{lo:.3}, {hi:.3}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },

    #[error("backend `{backend}` does not support {operation}")]
    Unsupported {
        backend: &'static str,
        operation: &'static str,
    },

    #[error("solver failed: {0}")]
    Solver(String),

    #[error(
        "sinkhorn did not converge: marginal error {error:.3e} > {target:.3e} \
         after {iterations} iterations at epsilon {epsilon:.3e}"
    )]
    SinkhornStalled {
        epsilon: f64,
        iterations: u64,
        error: f64,
        target: f64,
    },
}

impl Error {
    pub fn invalid(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            message: message.into(),
        }
    }

    pub fn solver(message: impl Into<String>) -> Self {
        Error::Solver(message.into())
    }
}
