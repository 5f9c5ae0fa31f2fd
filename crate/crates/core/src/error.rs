use thiserror::Error;

/// Errors raised by model construction, simulation and training.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    Dimension {
        expected: usize,
        actual: usize,
        context: &'static str,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("simulation diverged at step {step} (|x| = {magnitude:e})")]
    Divergence { step: usize, magnitude: f64 },
    #[error("non-finite value encountered: {0}")]
    NonFinite(&'static str),
    #[error("matrix {0} is not stable (spectral radius {1})")]
    Unstable(&'static str, f64),
    #[error("singular or ill-conditioned matrix: {0}")]
    Singular(String),
    #[error("integration blew up at t = {time} s")]
    IntegrationBlowUp { time: f64 },
    #[error("malformed data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(expected: usize, actual: usize, context: &'static str) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            expected,
            actual,
            context,
        })
    }
}
