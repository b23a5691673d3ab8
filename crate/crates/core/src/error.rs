use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("rating {value} is not a permitted level for aspect `{aspect}`")]
    InvalidRating { aspect: String, value: f64 },

    #[error("unknown aspect `{0}`")]
    UnknownAspect(String),

    #[error("rating level {level} out of range for aspect `{aspect}`")]
    UnknownRating { aspect: String, level: usize },

    #[error("review `{review_id}` has no rating for aspect `{aspect}`")]
    MissingRating { review_id: String, aspect: String },

    #[error("review `{review_id}` is not fully labeled: {message}")]
    MissingLabels { review_id: String, message: String },

    #[error("label references unknown review `{0}`")]
    UnknownReview(String),

    #[error("cost matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("review `{review_id}` has {sentences} sentences, fewer than the {aspects} aspects to summarize")]
    SummaryTooShort {
        review_id: String,
        sentences: usize,
        aspects: usize,
    },

    #[error("joint inference needs {required} rating vectors, budget is {budget}; reduce rating levels or raise the budget")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no usable data: {0}")]
    NoData(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error came from numerical failure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }
}
