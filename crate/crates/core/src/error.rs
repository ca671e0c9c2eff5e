use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch on {axis}: expected {expected}, found {found}")]
    Dimension {
        axis: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid grouping: {0}")]
    Grouping(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {what} at row {row}, column {col}")]
    NonFinite {
        what: &'static str,
        row: usize,
        col: usize,
    },

    #[error("column {0} of X has zero norm")]
    ZeroColumn(usize),

    #[error(
        "X'X is singular or ill-conditioned (min/max eigenvalue ratio {ratio:.3e}); \
         use compute_marginal_weights_base instead"
    )]
    IllConditioned { ratio: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("parse error in {path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(axis: &'static str, expected: usize, found: usize) -> Self {
        Error::Dimension {
            axis,
            expected,
            found,
        }
    }
}
