use std::path::PathBuf;

use thiserror::Error;

use crate::registry::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure classes. The CLI maps these onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Ingestion,
    Design,
    Numerical,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Ingestion => 2,
            ErrorCategory::Design => 3,
            ErrorCategory::Numerical => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no data: {0}")]
    NoData(String),

    #[error("unknown region `{0}`")]
    UnknownRegion(String),

    #[error("registry inconsistency: {0}")]
    Registry(String),

    #[error("contaminated design: {} violation(s), first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    Contaminated(Vec<Violation>),

    #[error("design error: {0}")]
    Design(String),

    #[error("empty cell: {0}")]
    EmptyCell(String),

    #[error("rank-deficient design, collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("two-way demeaning did not converge after {sweeps} sweeps (last max change {max_change:e})")]
    NotConverged { sweeps: usize, max_change: f64 },

    #[error("insufficient data: {0}")]
    Insufficient(String),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io { .. } | Error::Parse(_) | Error::InvalidInput(_) | Error::NoData(_) => ErrorCategory::Ingestion,
            Error::UnknownRegion(_)
            | Error::Registry(_)
            | Error::Contaminated(_)
            | Error::Design(_)
            | Error::EmptyCell(_) => ErrorCategory::Design,
            Error::RankDeficient { .. } | Error::NotConverged { .. } | Error::Insufficient(_) => {
                ErrorCategory::Numerical
            }
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
