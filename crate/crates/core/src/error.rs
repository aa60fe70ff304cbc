use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),

    #[error("invalid emission matrix: {0}")]
    Emissions(String),

    #[error("row {row} is not normalized: logsumexp = {logsumexp:.6}, tolerance {tolerance}")]
    RowNormalization { row: usize, logsumexp: f64, tolerance: f64 },

    #[error("emission matrix has {found} columns but the vocabulary has {expected} tokens")]
    ColumnMismatch { expected: usize, found: usize },

    #[error("reference contains the blank token at position {0}")]
    BlankInReference(usize),

    #[error("token id {id} is outside the vocabulary of size {size}")]
    TokenOutOfRange { id: u32, size: usize },

    #[error("reference needs at least {required} frames, only {available} available")]
    Unrealizable { required: usize, available: usize },

    #[error("instance too large to enumerate ({labelings} labelings, limit {limit})")]
    TooLarge { labelings: u128, limit: u128 },

    #[error("ARPA line {line}: {message}")]
    Arpa { line: usize, message: String },

    #[error("feature sets differ: expected [{expected}], found [{found}]")]
    FeatureMismatch { expected: String, found: String },

    #[error("weights line {line}: {message}")]
    Weights { line: usize, message: String },

    #[error("emission container: {0}")]
    Container(String),

    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("item {index}: {source}")]
    Item {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
