use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("regime error: {what} requires {required}, got H = {hurst}")]
    Regime {
        what: &'static str,
        required: &'static str,
        hurst: f64,
    },

    #[error("quadrature did not converge: estimate {estimate:e}, error bound {error:e} after {subdivisions} subdivisions")]
    NonConvergence {
        estimate: f64,
        error: f64,
        subdivisions: usize,
    },

    #[error("circulant embedding is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    EmbeddingNotPsd { min_eigenvalue: f64 },

    #[error("covariance matrix is not positive definite at row {row}")]
    NotPositiveDefinite { row: usize },

    #[error("resolution {resolution} is not divisible by {divisor}")]
    Divisibility { resolution: usize, divisor: usize },

    #[error("singular evaluation: {0}")]
    Singular(String),

    #[error("insufficient samples: need at least {required}, got {got}")]
    InsufficientSamples { required: usize, got: usize },

    #[error("degenerate regression design: {0}")]
    DegenerateDesign(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
