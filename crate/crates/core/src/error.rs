use thiserror::Error;

/// Errors produced by the forecasting engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: malformed field `{field}`: {value:?}")]
    MalformedField {
        row: usize,
        field: &'static str,
        value: String,
    },
    #[error("row {row}: crossed book (bid {bid} > ask {ask})")]
    CrossedBook { row: usize, bid: f64, ask: f64 },
    #[error("row {row}: {field} must be finite and strictly positive, got {value}")]
    NonPositive {
        row: usize,
        field: &'static str,
        value: f64,
    },
    #[error("row {row}: sequence index {seq} does not follow {previous}")]
    NonMonotoneSeq { row: usize, seq: u64, previous: u64 },
    #[error("csv header mismatch: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("feature {feature} overflowed to a non-finite value")]
    FeatureOverflow { feature: &'static str },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("partition does not match parent node")]
    PartitionMismatch,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("non-finite value: {0}")]
    NonFinite(&'static str),
    #[error("event {seq} arrived after {previous}")]
    OutOfOrder { seq: u64, previous: u64 },
    #[error("rolling window holds {got} of {needed} events")]
    WindowNotFull { needed: usize, got: usize },
    #[error("unknown model id `{0}`")]
    UnknownModel(String),
    #[error("degenerate score matrix: {0}")]
    DegenerateMatrix(String),
    #[error("rmse is zero; error reduction is undefined")]
    ZeroRmse,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("cell {cell}: {source}")]
    Cell {
        cell: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the input data rather than configuration
    /// or internal invariants.
    pub fn is_data_error(&self) -> bool {
        match self {
            Self::Cell { source, .. } => source.is_data_error(),
            Self::MalformedField { .. }
            | Self::CrossedBook { .. }
            | Self::NonPositive { .. }
            | Self::NonMonotoneSeq { .. }
            | Self::BadHeader { .. }
            | Self::FeatureOverflow { .. }
            | Self::OutOfOrder { .. }
            | Self::TooFewSamples { .. }
            | Self::Csv(_)
            | Self::Json(_)
            | Self::Checkpoint(_) => true,
            _ => false,
        }
    }

    pub fn is_config_error(&self) -> bool {
        match self {
            Self::Cell { source, .. } => source.is_config_error(),
            Self::InvalidConfig(_) | Self::UnknownModel(_) => true,
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
