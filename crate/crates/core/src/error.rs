use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented bound.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid config: {0}")]
    Config(String),

    /// Lengths, shape tags or domain counts do not line up.
    #[error("structural mismatch: {0}")]
    Structural(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("unmatched mixtures: {}", .0.join(", "))]
    Pairing(Vec<String>),

    #[error("missing required run: {0}")]
    Absence(String),

    #[error("rank correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::Config(_) | Error::Structural(_) | Error::Json(_) => 2,
            Error::Capacity(_) | Error::Pairing(_) | Error::Absence(_) => 3,
            Error::Numeric(_)
            | Error::NotPositiveDefinite { .. }
            | Error::Divergence { .. }
            | Error::UndefinedCorrelation(_)
            | Error::Degenerate(_) => 4,
            Error::Format(_) | Error::Io(_) => 1,
        }
    }
}

pub(crate) fn param_err(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Structural(msg.into())
}
