use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("every entry has zero mass")]
    AllZeroMass,
    #[error("invalid log-weight at index {index}: {value}")]
    InvalidLogWeight { index: usize, value: f64 },
    #[error("embedding is empty or contains non-finite values")]
    InvalidEmbedding,
    #[error("embedding has zero norm")]
    ZeroEmbedding,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("portrait sum is degenerate (norm {norm:e})")]
    DegeneratePrototype { norm: f64 },
    #[error("no identity has more than one portrait")]
    InsufficientPortraits,
    #[error("identity `{0}` has no portraits")]
    NoPortraits(String),
    #[error("duplicate identity id `{0}`")]
    DuplicateIdentity(String),
    #[error("identity id `{0}` is reserved")]
    ReservedIdentity(String),
    #[error("unknown identity id `{0}`")]
    UnknownIdentity(String),
    #[error("birth year {year} of `{id}` is outside {min}..={max}")]
    BirthYearOutOfRange {
        id: String,
        year: i32,
        min: i32,
        max: i32,
    },
    #[error("invalid concentration {0}")]
    InvalidKappa(f64),
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("alive window of birth year {birth_year} misses the year support")]
    EmptySupport { birth_year: i32 },
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("no valid assignment exists for the candidate pools")]
    NoValidAssignment,
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty input")]
    EmptyInput,
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
