use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("accountant configuration: {0}")]
    Config(String),

    #[error("truncation too tight: {0}")]
    Truncation(String),

    #[error("requested delta {requested:e} outside achievable range [{min:e}, {max:e}]")]
    OutOfRange { requested: f64, min: f64, max: f64 },

    #[error("solver could not bracket the target: {0}")]
    SolverRange(String),

    #[error("accounting inconsistency: {0}")]
    Inconsistent(String),

    #[error("privacy budget exhausted: a single step already costs epsilon {min_epsilon:.4} > target {target:.4}")]
    Budget { min_epsilon: f64, target: f64 },

    #[error("histogram construction failed: {0}")]
    Construction(String),

    #[error("ingestion error at row {row}: {message}")]
    Ingest { row: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn input(msg: impl Into<String>) -> Error {
    Error::Input(msg.into())
}
