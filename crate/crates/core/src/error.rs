use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive semidefinite (pivot {pivot:e})")]
    NonPsd { pivot: f64 },

    #[error("matrix is singular")]
    Singular,

    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),

    #[error("operation requires a single transmit antenna, got M_t = {0}")]
    WrongMode(usize),

    #[error("BD rate target {target:.6} bits is infeasible (maximum achievable {max:.6} bits)")]
    Infeasible { target: f64, max: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
