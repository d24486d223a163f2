use thiserror::Error;

/// Failures reported by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: {detail}")]
    Dimension {
        context: &'static str,
        detail: String,
    },

    #[error("{context}: matrix is {rows}x{cols}, expected square")]
    NotSquare {
        context: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("{0}: matrix is singular to working precision")]
    Singular(&'static str),

    #[error("{context}: matrix is not Schur stable (spectral radius {radius:.9})")]
    NotSchur { context: &'static str, radius: f64 },

    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("empty set: {0}")]
    EmptySet(String),

    #[error("quadratic term is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotConvex(f64),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("reduction: {0}")]
    Reduction(String),

    #[error("tuning: {0}")]
    Tuning(String),

    #[error("synthesis: {0}")]
    Synthesis(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn dim_err(context: &'static str, detail: impl Into<String>) -> Error {
    Error::Dimension {
        context,
        detail: detail.into(),
    }
}
