use std::path::PathBuf;

/// Errors produced anywhere in the simulator, fitters, and harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient sample: need at least {needed}, got {got}")]
    InsufficientSample { needed: usize, got: usize },

    #[error("normal matrix is rank deficient (pivot {pivot} of {dim} is {value:e})")]
    RankDeficient { pivot: usize, dim: usize, value: f64 },

    #[error("undefined slope: all abscissae are identical")]
    UndefinedSlope,

    #[error("constant regressor")]
    ConstantRegressor,

    #[error("quadrature did not converge: achieved error {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("moment of order {order} saturates the floating-point range")]
    Saturated { order: u32 },

    #[error("config error: {0}")]
    Config(String),

    #[error("integrity check failed for {path}: expected {expected}, found {found}")]
    Integrity {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
