use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CeError {
    #[error("variable count must be between 1 and {max}, got {n}")]
    VariableCount { n: u32, max: u32 },

    #[error("matrix has {rows} rows but {expected} states were expected")]
    Shape { rows: usize, expected: usize },

    #[error("row {row} has {cols} entries, expected {expected}")]
    RowLength {
        row: usize,
        cols: usize,
        expected: usize,
    },

    #[error("state count {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("entry ({row}, {col}) = {value} is outside [0, 1]")]
    EntryOutOfRange { row: usize, col: usize, value: f64 },

    #[error("row {row} sums to {sum}, deviating from 1 by more than 1e-12")]
    RowSum { row: usize, sum: f64 },

    #[error("distributions have different lengths ({0} vs {1})")]
    DimensionMismatch(usize, usize),

    #[error("divergence undefined: q[{0}] = 0 where p[{0}] > 0")]
    UndefinedDivergence(usize),

    #[error("row {0} is not one-hot; a deterministic matrix is required")]
    NotDeterministic(usize),

    #[error("invalid deg_vector [{fd}, {cd_sum}] for n = {n}: {reason}")]
    InvalidDegVector {
        fd: usize,
        cd_sum: usize,
        n: u32,
        reason: &'static str,
    },

    #[error("{name} = {value} is outside {range}")]
    OutOfDomain {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error(
        "macro model ({macro_n} variables) must be strictly smaller than micro model ({micro_n})"
    )]
    NotCoarser { micro_n: u32, macro_n: u32 },

    #[error("invalid coarse mapping: {0}")]
    InvalidMapping(String),

    #[error("invalid logic aggregation: {0}")]
    InvalidAggregation(String),

    #[error("brute-force search over {mappings} mappings of a {n}-variable model exceeds the guard; pass an override to run anyway")]
    TooLarge { n: u32, mappings: u128 },

    #[error("no candidate matched the target within tolerance")]
    NotFound,

    #[error("unknown figure id {0}")]
    UnknownFigure(u32),

    #[error("need at least {needed} records, have {have}")]
    TooFewRecords { needed: usize, have: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CeError {
    fn from(e: std::io::Error) -> Self {
        CeError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CeError>;
