use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("no feature columns found")]
    NoFeatureColumns,

    #[error("too few records: need at least {needed}, got {got}")]
    TooFewRecords { needed: usize, got: usize },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("feature names do not match the fitted parameters")]
    FeatureNameMismatch,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("atoms {0} and {1} occupy the same position")]
    CoincidentAtoms(usize, usize),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("two-body observable needs distinct atoms, got ({0}, {0})")]
    SameAtom(usize),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("coalition budget {budget} too small for {n_features} features (need {needed})")]
    BudgetTooSmall {
        budget: usize,
        n_features: usize,
        needed: usize,
    },

    #[error("subsample pool exhausted: {requested} records requested from {available}")]
    PoolExhausted { requested: usize, available: usize },

    #[error("only one class present in labels")]
    SingleClass,

    #[error("input has zero variance in every direction")]
    RankZero,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("k = {k} out of range 1..={max}")]
    KOutOfRange { k: usize, max: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
