use thiserror::Error;

/// Errors raised across the decontamination stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed or inconsistent input (dimension mismatch, bad shapes, violated preconditions).
    #[error("invalid input: {0}")]
    Input(String),

    /// The requested set class is not available for this input.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Two distributions that must differ are (numerically) identical.
    #[error("degenerate: {0}")]
    Degenerate(String),

    /// Linear program failed to converge, or an internal invariant was broken by round-off.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Penalized estimator has no admissible candidate set.
    #[error("estimation failure: {0}")]
    Estimation(String),

    /// An iterative search hit its cap without succeeding.
    #[error("no convergence: {0}")]
    Convergence(String),

    /// Input violates an assumption required by the algorithm (e.g. rank deficiency).
    #[error("assumption violated: {0}")]
    Assumption(String),

    /// Synthetic instance generation could not satisfy its constraints.
    #[error("generation failed: {0}")]
    Generation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
