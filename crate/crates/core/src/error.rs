use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("process is not invertible: {0}")]
    NotInvertible(String),

    #[error("autoregressive form is not stationary (companion spectral radius {0:.6})")]
    NotStationary(f64),

    #[error("Toeplitz segment is not positive definite (minimum eigenvalue {0:.3e})")]
    NotPositiveDefinite(f64),

    #[error("Levinson-Durbin recursion failed at order {order}: {reason}")]
    Recursion { order: usize, reason: String },

    #[error("design is rank deficient: {columns} columns, numerical rank {rank}")]
    RankDeficient { columns: usize, rank: usize },

    #[error("matrix is not symmetric positive definite")]
    NotSpd,

    #[error("power iteration did not converge after {iterations} iterations (last estimate {estimate})")]
    NoConvergence { iterations: usize, estimate: f64 },

    #[error("no feasible support: all {0} candidate supports had singular KKT systems")]
    AllSupportsSingular(usize),

    #[error("enumeration of {count} items exceeds the configured cap {cap}")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("efficiency ratio denominator is zero")]
    ZeroDenominator,

    #[error("model {index}: {source}")]
    Candidate {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
