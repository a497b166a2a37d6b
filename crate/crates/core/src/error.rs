use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{solver} did not converge within {iters} iterations (last residual {residual:e})")]
    NotConverged {
        solver: &'static str,
        iters: usize,
        residual: f64,
    },

    #[error("singular or indefinite system: {0}")]
    Singular(String),

    #[error("dataset too small for the lower-discount bound regime: epsilon = {0} >= 1")]
    DatasetTooSmall(f64),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for errors caused by invalid user input rather than runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Dimension(_)
                | Error::InvalidArgument(_)
                | Error::Validation(_)
                | Error::DatasetTooSmall(_)
                | Error::Parse(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
