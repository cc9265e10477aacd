use thiserror::Error;

/// Broad error class, used by the command line to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("line {line}: malformed row: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: crossed book (bid {bid} >= ask {ask})")]
    CrossedBook { line: usize, bid: f64, ask: f64 },

    #[error("line {line}: invalid tick: {msg}")]
    InvalidTick { line: usize, msg: String },

    #[error("line {line}: timestamp {timestamp_ms} not after previous tick in session {session}")]
    Ordering {
        line: usize,
        session: String,
        timestamp_ms: i64,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("insufficient data: need {needed}, got {got}")]
    Insufficient { needed: usize, got: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("no interior maximum: {0}")]
    NoInteriorMaximum(String),

    #[error("unstable step: theta*dt = {product} must be below {limit}")]
    Unstable { product: f64, limit: f64 },

    #[error("coordinate descent did not converge after {iterations} sweeps (last update {last_update:e})")]
    NotConverged {
        iterations: usize,
        last_update: f64,
        coefficients: Vec<f64>,
        intercept: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Unstable { .. } => ErrorClass::Config,
            Error::Parse { .. }
            | Error::CrossedBook { .. }
            | Error::InvalidTick { .. }
            | Error::Ordering { .. }
            | Error::Data(_)
            | Error::EmptyDataset(_)
            | Error::Insufficient { .. }
            | Error::ZeroVariance(_)
            | Error::Io(_) => ErrorClass::Data,
            Error::Numerical(_) | Error::NoInteriorMaximum(_) | Error::NotConverged { .. } => {
                ErrorClass::Numerical
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
