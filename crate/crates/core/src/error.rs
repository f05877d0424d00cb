use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid index {index} out of range 0..={steps}")]
    IndexOutOfRange { index: usize, steps: usize },

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("offset {offset} outside [0, {max}]")]
    OffsetOutOfRange { offset: f64, max: f64 },

    #[error("fine grid of {fine} steps is not divisible by {coarse}")]
    NotDivisible { fine: usize, coarse: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid sample count {got}; at least {min} required")]
    SampleCount { got: usize, min: usize },

    #[error("non-finite {what} evaluated at a finite state")]
    NonFinite { what: &'static str },

    #[error("model `{0}` has no closed-form solution")]
    NoExactSolution(String),

    #[error("model `{0}` ships no Lyapunov data")]
    NoLyapunov(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("constants inadmissible: {0}")]
    Inadmissible(String),

    #[error("{usable} usable rows; rate fit needs at least {required}")]
    InsufficientData { usable: usize, required: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
