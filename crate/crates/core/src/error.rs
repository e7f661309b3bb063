use thiserror::Error;

/// Errors raised by the numerics and the driver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("data integrity: {0}")]
    DataIntegrity(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("positivity violated in {field} at cell {cell}: value {value:e}")]
    Positivity {
        field: &'static str,
        cell: usize,
        value: f64,
    },

    #[error("step size {dt:e} exceeds stable bound {stable:e}")]
    StepSize { dt: f64, stable: f64 },

    #[error("linear solver did not converge after {iterations} iterations (residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error at {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}
