use thiserror::Error;

/// Errors surfaced by certificate construction, simulation and verification.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("test function does not provide derivatives of order {order} required by {context}")]
    MissingDerivatives { order: u32, context: &'static str },

    #[error("non-finite state component at index {index} during {context}")]
    NonFinite { index: usize, context: &'static str },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("did not converge after {iters} iterations (residual {residual:.3e})")]
    NotConverged { iters: usize, residual: f64 },
}

impl CoreError {
    pub fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        CoreError::DimensionMismatch {
            context,
            expected,
            got,
        }
    }
}
