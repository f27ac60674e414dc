use thiserror::Error;

/// Errors surfaced by maps, potentials, the SDE engine and the analysis layer.
#[derive(Debug, Error)]
pub enum MllError {
    /// A point sits on or outside the (primal or dual) domain of a map.
    #[error("domain violation: {0}")]
    DomainViolation(String),

    /// An iterative solve (Newton inversion, root finding) did not converge.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// The requested operation has no implementation for this combination.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Two sample sets that must match in size do not.
    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    /// Input exceeds a hard cost guard (e.g. exact assignment size).
    #[error("too large: {0}")]
    TooLarge(String),

    /// An order fit was requested on a grid that cannot support it.
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    /// A pairwise ratio was requested on coincident points.
    #[error("degenerate pair: {0}")]
    DegeneratePair(String),

    /// Mixing constants require the factor Lipschitz constant below the
    /// monotonicity constant; this instance violates that.
    #[error("not contractive: {0}")]
    NotContractive(String),

    /// Constraint matrix is rank deficient.
    #[error("singular constraints: {0}")]
    SingularConstraints(String),

    /// An asymptotic-bias estimate was requested before the chain settled.
    #[error("insufficient burn-in: {0}")]
    InsufficientBurnIn(String),

    /// Experiment configuration failed validation.
    #[error("invalid config: {0}")]
    ConfigInvalid(String),

    /// Chain execution aborted (e.g. domain-violation budget exceeded).
    #[error("execution failed: {0}")]
    ExecutionFailed(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MllError>;
