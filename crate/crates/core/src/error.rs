use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty patch set")]
    EmptyPatchSet,

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("degenerate sub-dataset: {rows} row(s), need at least 2")]
    DegenerateSubset { rows: usize },

    #[error("non-finite value in coordinate matrix")]
    NonFinite,

    #[error("basis mismatch: labels encrypted under {expected:016x}, got {actual:016x}")]
    BasisMismatch { expected: u64, actual: u64 },

    #[error("invalid catalog entry `{id}`: {msg}")]
    Catalog { id: String, msg: String },

    #[error("infeasible: {datasets} sub-datasets but only {instances} instances")]
    Infeasible { datasets: usize, instances: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
