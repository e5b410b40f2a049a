use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical parameter is outside the model's domain (e.g. at or above threshold).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// Two spectra that must share a frequency grid do not.
    #[error("grid mismatch: {0}")]
    Grid(String),

    #[error("shot-noise reference is not positive at bin {bin} ({frequency_hz} Hz): {value}")]
    Normalization {
        bin: usize,
        frequency_hz: f64,
        value: f64,
    },

    #[error("inconsistent efficiency budget: {0}")]
    InconsistentBudget(String),

    #[error("traces carry no squeezing feature: {0}")]
    NoFeature(String),

    #[error("{}line {line}: {message}", .path.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default())]
    Parse {
        path: Option<PathBuf>,
        line: usize,
        message: String,
    },

    #[error("malformed data in {path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
