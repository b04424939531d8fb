use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Shape mismatch in a tensor operation; names both shapes.
    #[error("dimension mismatch in {op}: {lhs} vs {rhs}")]
    Dim {
        op: &'static str,
        lhs: String,
        rhs: String,
    },

    /// Row index past the end of a table.
    #[error("index {index} out of range for table with {size} rows")]
    Index { index: usize, size: usize },

    /// Bad configuration value (odd embedding dim, infeasible synthetic
    /// config, unknown enum key, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An API precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// NaN/Inf where a finite value is required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Malformed or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),

    /// Invalid series catalog (overlapping series, too-short series, ...).
    #[error("series catalog error: {0}")]
    Catalog(String),

    /// Unknown user/item id.
    #[error("unknown node: {0}")]
    Lookup(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
