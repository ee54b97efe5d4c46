//! Crate-wide error type.

/// Errors reported by geometry, model, prior, risk and simulation routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A matrix that must be symmetric positive definite is not.
    #[error("matrix is not symmetric positive definite: {0}")]
    NonSpd(String),

    /// A point lies outside the admitted chart domain, or a finite-difference
    /// stencil would leave it.
    #[error("point outside chart domain: {0}")]
    Domain(String),

    /// An adaptive finite-difference step underflowed.
    #[error("finite-difference step underflow at coordinate {coord}")]
    Step { coord: usize },

    /// Charts of different dimension were combined.
    #[error("chart dimension mismatch: {0} vs {1}")]
    ChartMismatch(usize, usize),

    /// A quadrature or series expectation failed its internal error target.
    #[error("integration failed: {0}")]
    Integration(String),

    /// An invalid model, prior or plan specification.
    #[error("invalid specification: {0}")]
    Spec(String),

    /// A scalar parameter outside its admissible range.
    #[error("parameter out of range: {0}")]
    Range(String),

    /// The posterior quadrature window failed its mass check.
    #[error("posterior window check failed: {0}")]
    Window(String),

    /// A truncated sum left too much tail mass for the requested accuracy.
    #[error("series truncation too coarse: {0}")]
    Truncation(String),

    /// An improper integral does not converge for the given inputs.
    #[error("divergent integral: {0}")]
    DivergentIntegral(String),

    /// A prior ratio evaluated to a non-positive value.
    #[error("prior ratio not positive at the evaluation point (value {0})")]
    NonPositiveRatio(f64),

    /// Two internal routes that must agree disagreed; indicates a bug or a
    /// badly conditioned input rather than a user error.
    #[error("internal consistency check failed: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
