use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: unknown category `{value}`")]
    UnknownCategory { line: usize, value: String },

    #[error("user {user_id}: event at {timestamp} precedes course start {course_start}")]
    BeforeCourseStart {
        user_id: String,
        timestamp: i64,
        course_start: i64,
    },

    #[error("user {user_id}: event at {timestamp} falls in week {week}, past the {course_length_weeks}-week course")]
    AfterCourseEnd {
        user_id: String,
        timestamp: i64,
        week: i64,
        course_length_weeks: u32,
    },

    #[error("sequence of length {len} is shorter than action size {n}")]
    SequenceTooShort { len: usize, n: usize },

    #[error("prefix length {k} exceeds action size {n}")]
    PrefixTooLong { k: usize, n: usize },

    #[error("requested {requested} actions but only {available} exist")]
    TooManyActions { requested: usize, available: usize },

    #[error("search space of {size} actions exceeds the exhaustive limit {limit}")]
    SearchSpaceTooLarge { size: u128, limit: u128 },

    #[error("{what}: expected dimension {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {term}")]
    NonFinite { term: &'static str },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("each group needs at least 2 observations (got {0} and {1})")]
    GroupTooSmall(usize, usize),

    #[error("both classes must be present")]
    SingleClass,

    #[error("no user yields a positive/negative training pair")]
    NoTrainablePairs,

    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Whether the failure stems from bad input or configuration rather than a
    /// fault inside the pipeline.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::NonFinite { .. })
    }
}
