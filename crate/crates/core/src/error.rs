use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("series needs at least two samples to differentiate, got {0}")]
    DegenerateSeries(usize),

    #[error("event {event_id}: retained prefix has {retained} samples, need at least 2")]
    InsufficientData { event_id: String, retained: usize },

    #[error("coefficient of variation undefined: {0}")]
    MissingComponent(&'static str),

    #[error("invalid trace {event_id}: {reason}")]
    InvalidTrace { event_id: String, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("layout error: {0}")]
    Layout(String),

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("covariate `{0}` is collinear with the rest of the design")]
    CollinearCovariate(String),

    #[error("model has not been fitted to convergence")]
    NotFitted,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("infeasible generator target: {0}")]
    InvalidTarget(String),

    #[error("schema error at row {row}, column `{column}`: {message}")]
    Schema {
        row: usize,
        column: String,
        message: String,
    },

    #[error("join failed, {} orphan event ids: {}", orphans.len(), orphans.join(", "))]
    Join { orphans: Vec<String> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn spec(msg: impl Into<String>) -> Self {
        Error::InvalidSpec(msg.into())
    }

    pub(crate) fn layout(msg: impl Into<String>) -> Self {
        Error::Layout(msg.into())
    }

    pub(crate) fn schema(row: usize, column: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            row,
            column: column.into(),
            message: message.into(),
        }
    }
}
