use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("record {record}: {message}")]
    Parse { record: usize, message: String },

    #[error("record {record}: dimension {found} does not match expected dimension {expected}")]
    DimensionMismatch {
        record: usize,
        expected: usize,
        found: usize,
    },

    #[error("record {record}: feature {index} is not finite ({value})")]
    NonFinite {
        record: usize,
        index: usize,
        value: f64,
    },

    #[error("record {record}: feature {index} is negative ({value}); enable clamping to coerce to 0")]
    Negative {
        record: usize,
        index: usize,
        value: f64,
    },

    #[error("record {record}: duplicate template key {key}")]
    DuplicateKey { record: usize, key: String },

    #[error("{0}: no templates")]
    Empty(String),

    #[error("cannot normalize an all-zero feature vector")]
    ZeroVector,

    #[error("cross-validation needs at least 2 sessions, found {0}")]
    TooFewSessions(usize),

    #[error("vector dimensions differ: {left} vs {right}")]
    VectorLength { left: usize, right: usize },

    #[error("component {index} is invalid ({value}); metrics require finite non-negative inputs")]
    InvalidComponent { index: usize, value: f64 },

    #[error("unknown metric '{0}'")]
    UnknownMetric(String),

    #[error("gallery is empty")]
    EmptyGallery,

    #[error("{side} contains more than one template for key {key}")]
    AmbiguousKey { side: &'static str, key: String },

    #[error("template {key}: dimension {found} does not match roster size {expected}")]
    RosterSize {
        key: String,
        expected: usize,
        found: usize,
    },

    #[error("class score {value} for {key} is outside [0, 1]")]
    ClassScoreRange { key: String, value: f64 },

    #[error("{0} scores are empty")]
    EmptyScores(&'static str),

    #[error("probe {0} has no truth label")]
    MissingTruth(String),

    #[error("true subject '{subject}' of probe {probe} is not in the roster")]
    TruthNotInRoster { probe: String, subject: String },

    #[error("cannot aggregate: {0}")]
    Aggregate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("fold {fold}, {context}: {source}")]
    Fold {
        fold: usize,
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_fold(self, fold: usize, context: impl Into<String>) -> Self {
        Error::Fold {
            fold,
            context: context.into(),
            source: Box::new(self),
        }
    }
}
