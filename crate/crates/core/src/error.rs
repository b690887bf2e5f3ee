use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A requested size exceeds the memory guard.
    #[error("resource limit: {0}")]
    ResourceLimit(String),

    /// The constraint set of an optimization problem is empty.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A field was evaluated at (or sliced through) one of its point charges.
    #[error("singular evaluation: {0}")]
    Singular(String),

    /// A slicing sphere passes too close to a point charge.
    #[error("degenerate slice: {0}")]
    DegenerateSlice(String),

    /// An iterative solver stopped before reaching its tolerance.
    #[error("solver did not converge after {iterations} iterations (relative gap {gap:.3e})")]
    NoConvergence { iterations: usize, gap: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
