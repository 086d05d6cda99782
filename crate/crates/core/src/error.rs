use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("no unique critical point: A is rank deficient (sigma_min/sigma_max = {ratio:e})")]
    NoUniqueCriticalPoint { ratio: f64 },

    #[error("full-rank square A required ({0})")]
    NotFullRankSquare(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("rates violate the PPCA convergence hypothesis: {0}")]
    HypothesisViolation(String),

    #[error("non-finite value encountered at step {step}")]
    NonFinite { step: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {message}")]
    Csv { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
