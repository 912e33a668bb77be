use thiserror::Error;

/// Errors raised by the solvers and their building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function being evaluated.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value violates a documented invariant.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no sign change on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("root finder did not converge within {iterations} iterations")]
    MaxIterations { iterations: usize },

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("adaptive quadrature on [{lo}, {hi}] did not reach tolerance")]
    QuadratureFailure { lo: f64, hi: f64 },

    /// Effective sample size of the weighted paths fell below the usable floor.
    #[error("degenerate Monte Carlo sample (effective sample size {ess:.3})")]
    DegenerateSample { ess: f64 },

    /// The requested crossing mass exceeds what the surviving paths can deliver.
    #[error("target mass {target:.6e} exceeds attainable mass {attainable:.6e}")]
    InfeasibleMass { target: f64, attainable: f64 },

    /// The discretized Volterra equation has no root because the accumulated
    /// target mass reached one.
    #[error("discretized mass reached one; equation has no root")]
    MassOverflow,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    /// Wraps an error raised while processing knot `knot` (1-based).
    #[error("at knot {knot}: {source}")]
    AtKnot {
        knot: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_knot(self, knot: usize) -> Error {
        match self {
            e @ Error::AtKnot { .. } => e,
            e => Error::AtKnot {
                knot,
                source: Box::new(e),
            },
        }
    }

    /// The knot index attached to this error, if any.
    pub fn knot(&self) -> Option<usize> {
        match self {
            Error::AtKnot { knot, .. } => Some(*knot),
            _ => None,
        }
    }

    /// Strips any knot context and returns the underlying error.
    pub fn root_cause(&self) -> &Error {
        match self {
            Error::AtKnot { source, .. } => source.root_cause(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
