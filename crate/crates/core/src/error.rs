use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite matrix")]
    NonFiniteMatrix,
    #[error("covariance not PSD")]
    NotPsd,
    #[error("negative standard deviation: {0}")]
    NegativeStd(f64),
    #[error("degenerate measurement update")]
    DegenerateUpdate,
    #[error("degenerate scaling: n + lambda = {0}")]
    DegenerateScaling(f64),
    #[error("transform overflow")]
    TransformOverflow,
    #[error("undefined bearing: positions coincide")]
    UndefinedBearing,
    #[error("invalid range: {0}")]
    InvalidRange(f64),
    #[error("degenerate fusion")]
    DegenerateFusion,
    #[error("invalid weight: {0}")]
    InvalidWeight(f64),
    #[error("path out of bounds")]
    PathOutOfBounds,
    #[error("i/o error: {0}")]
    Io(String),
    #[error("invalid config: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
