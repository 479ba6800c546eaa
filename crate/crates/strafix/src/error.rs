use thiserror::Error;

/// Errors surfaced by system construction, evaluation and solving.
///
/// `NumericalFailure` is reserved for the interior-point solver giving up;
/// it is never silently mapped to an optimization status, so callers can
/// distinguish "the problem is infeasible" from "the solver failed".
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("equation system is not in standard form: {0}")]
    NotStandardForm(String),

    #[error("unsupported leaf in an active equation: {0}")]
    UnsupportedLeaf(String),

    #[error("constraint system is infeasible for variable {0}; the input valuation is not a feasible pre-solution")]
    InfeasibleConstraints(String),

    #[error("interior-point solver failed to converge: {0}")]
    NumericalFailure(String),

    #[error("internal invariant violated: {0}")]
    InternalInvariant(String),

    #[error("template is not convex: {0}")]
    NonConvexTemplate(String),

    #[error("model error: {0}")]
    Model(String),
}

pub type Result<T> = std::result::Result<T, Error>;
