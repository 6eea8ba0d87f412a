use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by tensor, network, and solver operations.
///
/// Variants are grouped by failure domain rather than by module so callers can
/// match on the kind of problem (bad labels, bad shapes, solver breakdown)
/// without caring where inside the pipeline it occurred.
#[derive(Debug, Error)]
pub enum Error {
    /// A requested index label does not exist, is duplicated, or collides.
    #[error("label error: {0}")]
    Label(String),

    /// Dimensions are inconsistent for the requested operation.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An argument is outside the supported domain (bad tolerance, bad cut, ...).
    #[error("invalid argument: {0}")]
    Invalid(String),

    /// A model description cannot be realized (unknown couplings, size too small, ...).
    #[error("model error: {0}")]
    Model(String),

    /// An iterative eigensolver exhausted its iteration budget.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// A dense factorization or other numerical kernel failed.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The operation is well-formed but unsupported for this state (e.g. gauge
    /// fixing a periodic chain).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A serialized container is malformed or has the wrong version.
    #[error("container format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
