use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}:{line}: malformed record: {message}", path.display())]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate passage id `{0}`")]
    DuplicatePassageId(String),

    #[error("query `{query}` references passage `{passage}` absent from corpus `{corpus}`")]
    DanglingReference {
        query: String,
        corpus: String,
        passage: String,
    },

    #[error("matched id `{id}` not found in corpus `{corpus}`")]
    UnknownMatchedId { corpus: String, id: String },

    #[error("id `{0}` appears in more than one match")]
    DuplicateMatch(String),

    #[error("passage `{0}` has no title to use as a query")]
    MissingTitle(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    MagicMismatch { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    VersionUnsupported(u32),

    #[error("file truncated while reading {0}")]
    TruncatedFile(&'static str),

    #[error("{0} trailing bytes after the last record")]
    TrailingData(usize),

    #[error("duplicate id `{0}` in embedding matrix")]
    DuplicateId(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dimension mismatch: query has {query}, matrix has {matrix}")]
    DimensionMismatch { query: usize, matrix: usize },

    #[error("corpus `{corpus}` has {size} passages; at least 2 are needed to sample a negative")]
    CorpusTooSmall { corpus: String, size: usize },

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("positive passage `{passage}` not found in corpus `{corpus}`")]
    UnknownPositive { corpus: String, passage: String },

    #[error("candidate list for corpus `{corpus}` has {have} hits, {need} needed")]
    InsufficientCandidates {
        corpus: String,
        have: usize,
        need: usize,
    },

    #[error("query `{0}` has no gold passages")]
    MissingGold(String),

    #[error("gold set is empty")]
    EmptyGold,

    #[error("no embeddings for corpus `{0}`")]
    MissingEmbeddings(String),

    #[error("gold passage `{passage}` of query `{query}` has no embedding in corpus `{corpus}`")]
    GoldNotEmbedded {
        query: String,
        corpus: String,
        passage: String,
    },

    #[error("no query embedding for query `{0}`")]
    MissingQueryEmbedding(String),

    #[error("seed set of {requested} exceeds the {available} validation queries")]
    SeedSetTooLarge { requested: usize, available: usize },

    #[error("invalid strategy `{0}`: expected `naive`, `per-task:<f>` with f in [0,1], or `oracle`")]
    InvalidStrategy(String),

    #[error("invalid fractions: {0}")]
    InvalidFractions(String),

    #[error("invalid utf-8 in {0}")]
    InvalidUtf8(&'static str),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
