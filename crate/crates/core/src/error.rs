use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("{what}: non-finite value at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("grid mismatch: expected d={expected_dim}, n={expected_n}, found d={found_dim}, n={found_n}")]
    GridMismatch {
        expected_dim: usize,
        expected_n: usize,
        found_dim: usize,
        found_n: usize,
    },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("{0}")]
    Precondition(String),

    #[error("solver diverged at t = {t}: {reason}")]
    SolverDiverged {
        t: f64,
        reason: String,
        last_valid: Box<crate::solver::Trajectory>,
    },

    #[error("field format: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
