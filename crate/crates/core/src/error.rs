use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("{0} requires integer q")]
    NonIntegerQ(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("state space too large: {0}")]
    StateSpaceTooLarge(String),

    #[error("no ordered fixed point: lambda = {lambda} is not above lambda_s = {lambda_s}")]
    NoOrderedFixedPoint { lambda: f64, lambda_s: f64 },

    #[error("degenerate regime: {0}")]
    DegenerateRegime(String),

    #[error("regime precondition violated: {0}")]
    Regime(String),

    #[error("kernel is not reversible (detailed-balance violation {0:e})")]
    NotReversible(f64),

    #[error("cut must be a non-empty proper subset of the state space")]
    InvalidCut,

    #[error("initial configuration does not match dynamics `{0}`")]
    MismatchedInit(&'static str),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 1 for usage and input errors, 2 for failed checks,
    /// 3 for regime preconditions.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::NoOrderedFixedPoint { .. } | Self::DegenerateRegime(_) | Self::Regime(_) => 3,
            Self::NotReversible(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
