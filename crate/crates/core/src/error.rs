use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("keep rate {0} is outside (0, 1]")]
    InvalidKeepRate(f64),

    #[error("forward cache does not match the network (stale or from another model)")]
    StaleCache,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("input coordinate {index} = {value} lies outside [0, 1]")]
    OutOfDomain { index: usize, value: f64 },

    #[error("channel {0} has zero variance over the training split")]
    ZeroVariance(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Divergence { epoch: usize, reason: String },

    #[error("predictive sd collapsed to the floor for {fraction:.2} of items in epoch {epoch}")]
    SigmaCollapse { epoch: usize, fraction: f64 },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("malformed data file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("missing artifacts: {}", .0.join(", "))]
    MissingArtifacts(Vec<String>),

    /// A sweep member failed; `completed` holds `(keep_rate, mean validation
    /// error)` for every member finished before it.
    #[error("sweep member keep_rate={keep_rate} failed after {} completed members: {source}", .completed.len())]
    SweepMember {
        keep_rate: f64,
        completed: Vec<(f64, f64)>,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn mismatch(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            actual,
        }
    }
}
