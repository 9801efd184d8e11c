use thiserror::Error;

use crate::graph::FirmId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown firm {0}")]
    UnknownFirm(FirmId),

    #[error("sector {sector} out of range (sector count {count})")]
    SectorOutOfRange { sector: usize, count: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("insufficient data for {what}: {detail}")]
    InsufficientData { what: String, detail: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("data inconsistency: {0}")]
    Inconsistent(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn insufficient(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::InsufficientData {
            what: what.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
