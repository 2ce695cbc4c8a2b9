use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or input lies outside the domain the model accepts.
    #[error("parameter `{name}` out of domain: {reason}")]
    ParameterDomain { name: String, reason: String },

    /// A read was requested above the disturb guard.
    #[error("read at {v_read} V exceeds the read-disturb guard of {guard} V; use a pulse or sweep to write")]
    ReadDisturb { v_read: f64, guard: f64 },

    #[error("switching branch spans {span:.3} of the dynamic range, at least {required:.2} is required")]
    InsufficientSwitching { span: f64, required: f64 },

    #[error("switching branch is not monotone in resistance")]
    NonMonotoneBranch,

    #[error("fit needs at least {required} points with distinct widths, got {got}")]
    Fit { required: usize, got: usize },

    #[error("target conductance {target:e} S at ({row}, {col}) outside window [{g_min:e}, {g_max:e}] S")]
    TargetDomain { row: usize, col: usize, target: f64, g_min: f64, g_max: f64 },

    #[error("update scheme not half-select safe: {0}")]
    HalfSelect(String),

    #[error("unknown quantity `{0}`")]
    UnknownQuantity(String),

    #[error("objective is not finite; offending anchor `{anchor}` simulated {value}")]
    NonFiniteObjective { anchor: String, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("key `{key}`: {message}")]
    Key { key: String, message: String },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(name: &str, reason: impl Into<String>) -> Self {
        Error::ParameterDomain { name: name.to_string(), reason: reason.into() }
    }

    pub(crate) fn key(key: &str, message: impl Into<String>) -> Self {
        Error::Key { key: key.to_string(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
