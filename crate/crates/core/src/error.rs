use thiserror::Error;

/// Errors raised by the estimation library and the experiment front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter outside the family domain: {0}")]
    Domain(String),

    #[error("invalid frequency grid: {0}")]
    Grid(String),

    #[error("parameters not identifiable on this grid: {0}")]
    Identifiability(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("unstable system parameters: {0}")]
    Unstable(String),

    #[error("rate condition violated: eigenvalue {re:.6}{im:+.6}i of A*+I/2 has non-negative real part")]
    RateCondition { re: f64, im: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("monte carlo noise dominates: {0}")]
    NoiseDominated(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
