//! Error type shared by every module of the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A pivot fell below the relative singularity threshold during LU.
    #[error("singular matrix: pivot {pivot:.3e} below threshold {threshold:.3e} at column {column}")]
    SingularMatrix {
        pivot: f64,
        threshold: f64,
        column: usize,
    },

    /// The stage system became singular; usually the step size is too large.
    #[error("stage system singular at h = {h}; reduce the step size ({source})")]
    StepTooLarge {
        h: f64,
        #[source]
        source: Box<Error>,
    },

    /// An argument outside the mathematical domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid problem, scheme or experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A tableau failed a structural check.
    #[error("invalid tableau: {0}")]
    InvalidTableau(String),

    #[error("no convergence after {iterations} iterations (last displacement {displacement:.3e})")]
    NoConvergence { iterations: usize, displacement: f64 },

    /// A stage iterate blew past the divergence guard.
    #[error("iteration diverged: stage norm {norm:.3e} exceeds {limit:.3e}")]
    Diverged { norm: f64, limit: f64 },

    /// History-based predictors have nothing to extrapolate from on the first step.
    #[error("predictor needs a previous step")]
    FirstStep,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Strips `StepFailed` / `StepTooLarge` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::StepFailed { source, .. } | Error::StepTooLarge { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_diverged(&self) -> bool {
        matches!(self.root(), Error::Diverged { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
