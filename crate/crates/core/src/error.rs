use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("line {line}: duplicate post id `{post_id}`")]
    DuplicatePostId { line: usize, post_id: String },

    #[error("line {line}: thread `{thread_id}` already belongs to board `{existing}`, not `{found}`")]
    ThreadBoardConflict {
        line: usize,
        thread_id: String,
        existing: String,
        found: String,
    },

    #[error("unknown member `{0}`")]
    UnknownMember(String),

    #[error("selection rule matches no posts")]
    EmptyPopulation,

    #[error("graph has {nodes} nodes, above the exact betweenness limit of {limit}; all-pairs shortest paths are infeasible at this size")]
    TooLargeForBetweenness { nodes: usize, limit: usize },

    #[error("every member has a zero metric value")]
    AllZeroMetric,

    #[error("need at least 25 posts to bin, population has {0}")]
    TooFewPosts(usize),

    #[error("invalid sample size {size}: {reason}")]
    InvalidSampleSize { size: usize, reason: String },

    #[error("bin {bin} holds {available} eligible posts, quota is {quota} (short by {})", quota - available)]
    BinExhausted {
        bin: usize,
        quota: usize,
        available: usize,
    },

    #[error("reused post `{0}` is not part of the population")]
    ReuseOutsidePopulation(String),

    #[error("sample needs {needed} newly drawn posts, cap is {cap}")]
    NewPostCapExceeded { needed: usize, cap: usize },

    #[error("all documents are empty after preprocessing")]
    EmptyCorpus,

    #[error("vocabulary is empty after applying min_df = {min_df}")]
    EmptyVocabulary { min_df: usize },

    #[error("class `{0}` has a single sample; oversampling needs at least two")]
    SingletonClass(String),

    #[error("training data has {0} class(es); at least two are required")]
    TooFewClasses(usize),

    #[error("feature dimension mismatch: model expects {expected}, matrix has {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("stratum `{stratum}` has {size} item(s); at least two are needed to split")]
    StratumTooSmall { stratum: String, size: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("prediction universes differ: {0}")]
    UniverseMismatch(String),

    #[error("empty input")]
    EmptyInput,

    #[error("non-positive value {0} in geometric mean")]
    NonPositive(f64),

    #[error("{successes} successes out of {trials} trials")]
    InvalidProportion { successes: u64, trials: u64 },

    #[error("ragged rating table: item {item} has {found} ratings, expected {expected}")]
    RaggedRatings {
        item: usize,
        expected: usize,
        found: usize,
    },

    #[error("unknown class `{0}`")]
    UnknownClass(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported snapshot schema version {0}")]
    SchemaVersion(u32),

    #[error("malformed model file: {0}")]
    ModelFormat(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    IoBare(#[from] std::io::Error),

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

    /// True for errors caused by bad user input rather than bad data.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidSampleSize { .. }
                | Error::InvalidConfig(_)
                | Error::UnknownClass(_)
                | Error::TooLargeForBetweenness { .. }
                | Error::NewPostCapExceeded { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
