use thiserror::Error;

/// Errors raised by the sensing and learning stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("track length {found} does not match frame count {expected} (track {index})")]
    TrackLength {
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("no correlation peak: input is all zeros")]
    NoCorrelationPeak,

    #[error("undefined phase: frame {0} sums to zero")]
    UndefinedPhase(usize),

    #[error("noise floor undefined: power grid is all zeros")]
    ZeroPower,

    #[error("stale activation cache: {0}")]
    StaleCache(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty split: {0}")]
    EmptySplit(&'static str),

    #[error("missing class {0} in training data")]
    MissingClass(usize),

    #[error("unknown id: {0}")]
    UnknownId(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error("bad magic bytes in {0}")]
    Magic(&'static str),

    #[error("truncated file: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("invalid data: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
