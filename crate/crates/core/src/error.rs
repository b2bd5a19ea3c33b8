use thiserror::Error;

/// Errors produced by sequence generation, simulation and estimation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid sequence length {length}: {reason}")]
    InvalidLength { length: usize, reason: String },

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("not a DFT eigenvector: max residual {max_residual:.3e} at k = {worst_k}")]
    NotEigenvector { max_residual: f64, worst_k: usize },

    #[error("sequence has no excited harmonic")]
    NoExcitedHarmonic,

    #[error("empty input")]
    EmptyInput,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sampling rate mismatch: {expected} Hz vs {found} Hz")]
    SampleRateMismatch { expected: f64, found: f64 },

    #[error("alignment mismatch: {0}")]
    Alignment(String),

    #[error("record holds {available} full periods, {required} required")]
    TooFewPeriods { available: usize, required: usize },

    #[error(
        "operando reconstruction needs a single-period record, got {0} periods; \
         split the record into one-period bursts first"
    )]
    MultiPeriod(usize),

    #[error("unsupported sequence: {0}")]
    UnsupportedSequence(String),

    #[error("spectrum grids differ: {0}")]
    GridMismatch(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
