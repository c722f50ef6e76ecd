use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {what} at line {line}: {message}")]
    Parse {
        what: String,
        line: usize,
        message: String,
    },

    #[error("scenario validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("case file: {0}")]
    Case(String),

    #[error("branch {from}-{to} has zero impedance")]
    ZeroImpedance { from: usize, to: usize },

    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:e} p.u.)")]
    NotConverged { iterations: usize, mismatch: f64 },

    #[error("singular Jacobian: {0}")]
    SingularJacobian(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("zero normalizer for {0}")]
    ZeroNormalizer(&'static str),

    #[error("infeasible stage at horizon {horizon}: {reason}")]
    Infeasible { horizon: usize, reason: String },

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("quadratic program: {0}")]
    Qp(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl Error {
    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Case(_) => "case",
            Error::ZeroImpedance { .. } => "zero_impedance",
            Error::NotConverged { .. } => "not_converged",
            Error::SingularJacobian(_) => "singular_jacobian",
            Error::Dimension(_) => "dimension",
            Error::InvalidInput(_) => "invalid_input",
            Error::ZeroNormalizer(_) => "zero_normalizer",
            Error::Infeasible { .. } => "infeasible",
            Error::Csv { .. } => "csv",
            Error::Qp(_) => "qp",
        }
    }
}
