// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// NaN/Inf produced, or an iteration that must converge did not.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Forward solve did not reach the tolerance while training.
    #[error("forward solve did not converge: {0}")]
    NonConvergence(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("unknown {what} '{name}'")]
    Unknown { what: &'static str, name: String },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line tool; distinct per error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) => 2,
            Error::Dimension(_) => 3,
            Error::Numeric(_) => 4,
            Error::NonConvergence(_) => 5,
            Error::Usage(_) => 6,
            Error::Unknown { .. } => 7,
            Error::Format(_) | Error::Json(_) => 8,
            Error::Empty(_) => 9,
            Error::Io { .. } => 10,
        }
    }
}
