use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("lot matrix violates constraints: {0}")]
    InvalidLotMatrix(String),
    #[error("inadmissible dividend process: price would become negative at index {index} ({price})")]
    InadmissibleDividend { index: usize, price: f64 },
    #[error("grids do not match: {0}")]
    GridMismatch(String),
    #[error("enumeration budget exceeded: {visited} matrices visited (budget {budget})")]
    BudgetExceeded { visited: u64, budget: u64 },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
