use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unknown modulation class `{0}`")]
    UnknownClass(String),

    #[error("class mismatch: {0}")]
    ClassMismatch(String),

    #[error("insufficient examples for class `{class}`: need {needed}, found {available}")]
    Shortfall {
        class: String,
        needed: usize,
        available: usize,
    },

    #[error("input has zero power")]
    ZeroPower,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("backward pass requires a training-mode forward cache")]
    MissingCache,

    #[error("malformed file: {0}")]
    Format(String),

    #[error("length mismatch: metadata describes {expected} bytes, data file has {actual}")]
    LengthMismatch { expected: u64, actual: u64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
