use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown system `{name}`; valid names: {valid}")]
    UnknownSystem { name: String, valid: String },

    #[error("unknown controller `{name}`; valid names: {valid}")]
    UnknownController { name: String, valid: String },

    #[error("invalid {what}: {reason}")]
    Invalid { what: String, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("discretization parameter must be positive, got {0}")]
    NonPositiveStep(f64),

    #[error("cover has {count} cells which exceeds the platform count type")]
    CoverTooLarge { count: String },

    #[error("point outside the covered box in dimension {dim}: {value} not in [{lo}, {hi}]")]
    OutsideBox {
        dim: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("epsilon too small for these output maps: no state pair passes the output filter")]
    EmptyDataset,

    #[error("epsilon - gamma must be positive (epsilon = {epsilon}, gamma = {gamma})")]
    NoErrorBudget { epsilon: f64, gamma: f64 },

    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),

    #[error("no initial state with V >= 0.5 for this source state (best value {best})")]
    NoMatchingInitialState { best: f64 },

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: String, reason: String },

    #[error("checkpoint {path}: truncated payload, expected {expected} bytes, found {found}")]
    TruncatedCheckpoint {
        path: String,
        expected: usize,
        found: usize,
    },

    #[error("checkpoint role mismatch: expected {expected}, found {found}")]
    RoleMismatch { expected: String, found: String },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("report serialization: {0}")]
    Serialize(String),
}

impl Error {
    pub(crate) fn invalid(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what: what.into(),
            reason: reason.into(),
        }
    }
}
