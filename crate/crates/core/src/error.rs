use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("friction multiplier H({price}) = {value} is not strictly positive")]
    NonPositiveFriction { price: f64, value: f64 },

    #[error("grid mismatch: expected {expected} steps, got {actual}")]
    GridMismatch { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("sample entry {index} = {value} must be finite and non-negative")]
    BadSample { index: usize, value: f64 },

    #[error("well-posedness check failed: {0}")]
    IllPosed(String),

    #[error("optimizer produced no feasible evaluation: {0}")]
    NoFeasible(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_finite(x: f64, what: &'static str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(what))
    }
}
