use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Every variant maps onto one of the CLI exit classes through
/// [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),

    #[error("missing capability: {0}")]
    Capability(String),

    #[error("eigensolver did not converge after {iterations} iterations (worst residual {worst_residual:.3e}, tolerance {tolerance:.3e})")]
    NoConvergence {
        iterations: usize,
        worst_residual: f64,
        tolerance: f64,
    },

    #[error("time step {dt} too coarse: stability requires dt <= {required}")]
    Stability { dt: f64, required: f64 },

    #[error("inclusion under-resolved: grid spacing {h} exceeds required {required}")]
    Resolution { h: f64, required: f64 },

    #[error("FDTD run became unstable at step {step} (sup-norm {sup_norm:.3e} > bound {bound:.3e}); check CFL (dt = {dt}, h = {h})")]
    Unstable {
        step: usize,
        sup_norm: f64,
        bound: f64,
        dt: f64,
        h: f64,
    },

    #[error("retarded time {requested} outside modulation horizon {horizon}")]
    Coverage { requested: f64, horizon: f64 },

    #[error("geometry mismatch: {0}")]
    Geometry(String),

    #[error("planning failed: {message}; feasible eps range {feasible:?}")]
    Planning {
        message: String,
        feasible: Option<(f64, f64)>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("quality check failed: {0}")]
    Quality(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for validation problems, 3 for numerical
    /// quality failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_)
            | Error::DegenerateDomain(_)
            | Error::Capability(_)
            | Error::Stability { .. }
            | Error::Resolution { .. }
            | Error::Coverage { .. }
            | Error::Geometry(_)
            | Error::Planning { .. }
            | Error::Config(_) => 2,
            Error::NoConvergence { .. } | Error::Unstable { .. } | Error::Quality(_) => 3,
            Error::Io { .. } | Error::Format { .. } => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
