use std::time::Duration;

use thiserror::Error;

/// Errors raised by the solvers, partitions and optimization drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid {nx}x{ny}: both dimensions must be at least 3")]
    InvalidGrid { nx: usize, ny: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("non-finite state encountered at t = {t}")]
    NonFinite { t: f64 },

    #[error("exponential propagation did not converge within {limit} substeps")]
    PropagationFailed { limit: usize },

    #[error("worker {worker} failed during {phase}: {source}")]
    Worker {
        worker: usize,
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("worker {worker} aborted because an upstream worker failed")]
    Aborted { worker: usize },

    #[error("nonlinear iteration did not converge after {iterations} iterations (errors {history:?})")]
    NonConvergence { iterations: usize, history: Vec<f64> },

    #[error("pilot run took {elapsed:?}, below the {minimum:?} needed for a reliable timing")]
    PilotTooShort { elapsed: Duration, minimum: Duration },

    #[error("cost became non-finite at descent step {step}")]
    NonFiniteCost { step: usize },
}

impl Error {
    pub(crate) fn in_worker(self, worker: usize, phase: &'static str) -> Error {
        match self {
            e @ (Error::Aborted { .. } | Error::Worker { .. }) => e,
            other => Error::Worker {
                worker,
                phase,
                source: Box::new(other),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
