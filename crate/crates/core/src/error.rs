use thiserror::Error;

/// Errors raised by model construction, fitting, inference and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("fitting failed after {starts} start(s): {reason}")]
    FitFailed { starts: usize, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("zero variance in column `{0}`, cannot standardize")]
    ZeroVariance(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("experiment aborted: {0}")]
    Experiment(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse classification used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Domain(_) | Error::InvalidParams(_) => ErrorClass::Usage,
            Error::DegenerateDesign(_) | Error::FitFailed { .. } | Error::Experiment(_) => {
                ErrorClass::Numerical
            }
            Error::Dimension(_)
            | Error::InvalidData(_)
            | Error::MissingColumn(_)
            | Error::Parse { .. }
            | Error::ZeroVariance(_)
            | Error::Csv(_)
            | Error::Io(_) => ErrorClass::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
