use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A time grid is too sparse for the dynamics it has to carry.
    #[error("time grid too coarse: step {step:.3e} s exceeds limit {limit:.3e} s")]
    GridTooCoarse { step: f64, limit: f64 },

    #[error("carrier mismatch: {left:.9e} rad/s vs {right:.9e} rad/s")]
    MismatchedCarrier { left: f64, right: f64 },

    /// The weighted normal matrix could not be inverted at the optimum.
    #[error("singular normal matrix (condition estimate {condition:.3e})")]
    SingularNormalMatrix { condition: f64 },

    #[error("model evaluation failed: {0}")]
    ModelEvaluation(String),

    #[error("no resolvable peak in spectrum")]
    NoResolvablePeak,

    /// The spectrum carries no signal distinguishable from its noise.
    #[error("spectrum is flat: max population {max:.3e} below threshold {threshold:.3e}")]
    FlatSpectrum { max: f64, threshold: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
