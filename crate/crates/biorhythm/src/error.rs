use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file (CSV or config), with the offending line.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    /// More than one record for the same (user, date).
    #[error("duplicate records: {}", format_offenders(offenders))]
    DuplicateRecords { offenders: Vec<(String, NaiveDate)> },

    #[error("unknown user `{0}`")]
    UnknownUser(String),

    /// Not enough observations to evaluate a metric.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Input outside the operation's domain (empty window, mismatched
    /// bins, all-missing data, ...).
    #[error("{0}")]
    Domain(String),

    /// OOS growth is undefined when the before-window outlier fraction is zero.
    #[error("out-of-sync growth undefined: before-window outlier fraction is 0")]
    UndefinedGrowth,

    /// Silhouette needs at least two non-noise clusters.
    #[error("silhouette undefined: {0}")]
    UndefinedSilhouette(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn insufficient(msg: impl Into<String>) -> Self {
        Error::InsufficientData(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

fn format_offenders(offenders: &[(String, NaiveDate)]) -> String {
    offenders
        .iter()
        .map(|(u, d)| format!("({u}, {d})"))
        .collect::<Vec<_>>()
        .join(", ")
}
