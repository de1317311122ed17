use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header in {path}: {detail}")]
    MalformedHeader { path: String, detail: String },
    #[error("row {row}: non-numeric field `{field}`")]
    NonNumericField { row: usize, field: String },
    #[error("row {row}: duplicate sample id {id}")]
    DuplicateId { row: usize, id: u64 },
    #[error("row {row}: expected {expected} fields, found {found}")]
    RowWidth {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("bad magic bytes (expected \"OALF\")")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sample {0} is already annotated")]
    AlreadyAnnotated(u64),
    #[error("unknown sample id {0}")]
    UnknownId(u64),
    #[error("target class {0} has no samples")]
    EmptyTargetClass(usize),
    #[error("fraction {0} out of range (0,1)")]
    FractionOutOfRange(f64),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("no unlabeled samples left")]
    NoUnlabeled,
    #[error("budget {budget} exceeds candidate count {candidates}")]
    BudgetExceedsCandidates { budget: usize, candidates: usize },
    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
