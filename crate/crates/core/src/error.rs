use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The network or matrix does not have the required structure.
    #[error("structural error: {0}")]
    Structure(String),

    #[error("singular system in {context} (condition estimate {condition:.3e})")]
    Singular { context: String, condition: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("power flow did not converge at step {step}: max mismatch {mismatch:.3e}")]
    PowerFlow { step: usize, mismatch: f64 },

    #[error("unsupported prior: {0}")]
    UnsupportedPrior(String),

    #[error("parse error: {0}")]
    Parse(String),

    /// A solver invariant was violated (for example a monotone objective
    /// increased).
    #[error("internal solver error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by the data (singularity, divergence) rather
    /// than by the configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Singular { .. } | Error::PowerFlow { .. } | Error::Internal(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
