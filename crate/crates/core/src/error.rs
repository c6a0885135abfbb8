use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside the domain where the operation is defined.
    #[error("parameter out of domain: {0}")]
    Domain(String),

    /// The parameter point is not covered by any of the convergence theorems.
    #[error("out of scope: {0}")]
    OutOfScope(String),

    /// Least-squares or linear system too ill-conditioned to trust.
    #[error("ill-conditioned system (condition number {cond:.3e}): {hint}")]
    IllConditioned { cond: f64, hint: String },

    /// A point was passed to an evaluator outside its domain of definition.
    #[error("point outside domain: {0}")]
    OutsideDomain(String),

    /// Explicit time step violates the advective CFL bound.
    #[error("CFL violation: dt*max|u|*N/L = {number:.3} > 0.5; try dt <= {suggested_dt:.3e}")]
    Cfl { number: f64, suggested_dt: f64 },

    /// A matrix that must be invertible is singular.
    #[error("singular system: {0}")]
    Singular(String),

    /// A precondition on input data does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The operation is not implemented for this input class.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Malformed configuration text.
    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
