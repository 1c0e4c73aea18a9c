use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid axes: {0}")]
    InvalidAxes(String),

    #[error("sequence length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty sequence")]
    EmptySequence,

    #[error("symbol {symbol} out of range for alphabet of size {alphabet}")]
    SymbolOutOfRange { symbol: usize, alphabet: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("codebook needs {cells} index cells, budget is {budget}")]
    BudgetExceeded { cells: u128, budget: u64 },

    #[error("conditional distribution undefined for conditioning row {row}")]
    UndefinedConditional { row: usize },

    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("grid has {candidates} candidates, limit is {limit}")]
    GridTooLarge { candidates: u128, limit: u64 },

    #[error("no strongly typical source sequence exists at n = {n}")]
    NoTypicalSequence { n: usize },
}
