use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid question {item_id}: {reason}")]
    InvalidQuestion { item_id: String, reason: String },

    #[error("duplicate item id {0}")]
    DuplicateItem(String),

    #[error("interaction references unknown item {0}")]
    UnknownItem(String),

    #[error("no parameters for {kind} {id}")]
    MissingParams { kind: &'static str, id: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("item {item_id} has {count} interactions, need at least 2 to split")]
    InsufficientInteractions { item_id: String, count: usize },

    #[error("k = {k} folds requested but only {rows} rows available")]
    TooFewRows { k: usize, rows: usize },

    #[error("step {step} is flagged for evaluation but not for skill update")]
    FlagInconsistency { step: usize },

    #[error("timestamps must be non-decreasing (step {step})")]
    UnorderedSequence { step: usize },

    #[error("id sets differ: {0}")]
    IdMismatch(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the content of input data rather than by
    /// configuration or numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidQuestion { .. }
                | Error::DuplicateItem(_)
                | Error::UnknownItem(_)
                | Error::MissingParams { .. }
                | Error::Empty(_)
                | Error::InsufficientInteractions { .. }
                | Error::TooFewRows { .. }
                | Error::UnorderedSequence { .. }
                | Error::IdMismatch(_)
                | Error::DimensionMismatch { .. }
                | Error::Parse(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}
