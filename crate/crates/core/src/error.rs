use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulator and its harness.
#[derive(Debug, Error)]
pub enum FlrError {
    /// A configuration key is unknown, malformed or out of range.
    #[error("config error for `{key}`: {msg}")]
    Config { key: String, msg: String },

    /// A function was called outside its precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The right-hand side of the fixed-ion Poisson problem is not mean-zero.
    #[error("charge imbalance: right-hand side mean {mean:e} violates solvability")]
    ChargeImbalance { mean: f64 },

    /// A particle weight or grid value is NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A diagnostic became non-finite during a run.
    #[error("non-finite diagnostics at step {step}")]
    NonFiniteDiagnostics { step: usize },

    /// Not enough samples for a time-series analysis.
    #[error("insufficient sampling: {0}")]
    InsufficientSampling(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A snapshot or CSV file does not match the expected layout.
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    /// A sweep member failed.
    #[error("sweep member epsilon={epsilon} failed: {source}")]
    SweepMember {
        epsilon: f64,
        #[source]
        source: Box<FlrError>,
    },
}

impl FlrError {
    pub(crate) fn config(key: &str, msg: impl Into<String>) -> Self {
        FlrError::Config {
            key: key.to_string(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FlrError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 1 for configuration errors, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            FlrError::Config { .. } => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, FlrError>;
