use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("missing required column `{column}` in {path}")]
    MissingColumn { column: String, path: String },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("single-class target: {0}")]
    SingleClass(String),

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("panel carries no synthetic ground truth")]
    NotSynthetic,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used by the command-line driver to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Data,
    Estimation,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::SingleClass(_) | Error::RankDeficient(_) | Error::Estimation(_) => ErrorClass::Estimation,
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
