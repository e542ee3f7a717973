use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("power multiplier bisection did not converge after {iterations} halvings (relative residual {residual:e})")]
    BisectionNotConverged { iterations: usize, residual: f64 },

    #[error("receiver of user {user} is inconsistent: weight denominator {denominator:e} is not positive")]
    InconsistentReceiver { user: usize, denominator: f64 },

    #[error("weight of user {user} must be positive, got {value}")]
    NonPositiveWeight { user: usize, value: f64 },

    #[error("power-split ratio must be positive, got {0}")]
    InvalidEpsilon(f64),

    #[error("cross-polar energy is zero although the XPD factor is {beta}")]
    ZeroCrossPolar { beta: f64 },

    #[error("phase index {index} outside codebook of size {size}")]
    PhaseIndex { index: usize, size: usize },

    #[error("amplitude {0} outside [0, 1]")]
    Amplitude(f64),

    #[error("no samples supplied")]
    EmptySamples,

    #[error("no valid rows for scheme {scheme} at {param} = {value}")]
    EmptyGroup {
        scheme: String,
        param: String,
        value: f64,
    },

    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
