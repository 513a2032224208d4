use thiserror::Error;

use crate::interval_solver::Aborted;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("score table has no labels")]
    MissingLabels,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular system: pivot {pivot} has magnitude {magnitude:e}")]
    SingularMatrix { pivot: usize, magnitude: f64 },

    #[error(transparent)]
    Aborted(#[from] Aborted),

    #[error("all importance weights are zero")]
    ZeroWeights,

    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
