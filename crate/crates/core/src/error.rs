use thiserror::Error;

use crate::optimizer::OptimizeTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible admissible set: {0}")]
    Infeasible(String),

    /// Conjugate gradients hit the iteration cap. `residuals` is the relative
    /// residual after every iteration.
    #[error("{message} (final relative residual {final_residual:.3e})")]
    NumericalFailure {
        message: String,
        final_residual: f64,
        residuals: Vec<f64>,
    },

    #[error("optimizer stalled at iteration {iteration}: step {step:.3e} below 1e-16")]
    Stalled {
        iteration: usize,
        step: f64,
        trace: Box<OptimizeTrace>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
