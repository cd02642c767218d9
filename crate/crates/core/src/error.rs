use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("alpha = {0} is not a valid order (need alpha > 0 and alpha != 1)")]
    InvalidAlpha(f64),

    #[error("kernel self-similarity K[{index}][{index}] = {value} is not positive; normalization undefined")]
    NonPositiveDiagonal { index: usize, value: f64 },

    #[error("matrix is not positive semi-definite (eigenvalue {eigenvalue:e})")]
    NotPsd { eigenvalue: f64 },

    #[error("estimate collapsed: trace estimate {value:e} is not positive")]
    CollapsedEstimate { value: f64 },

    #[error("largest eigenvalue estimate {0:e} is not positive")]
    NonPositiveLambdaMax(f64),

    #[error("power iteration hit a zero vector after {attempts} attempts")]
    ZeroVector { attempts: usize },

    #[error("eigensolver failed to converge")]
    EigenSolver,

    #[error("singular value decomposition failed to converge")]
    Svd,

    #[error("kernel is not shift-invariant; block low-rank approximation requires a gaussian kernel")]
    NotShiftInvariant,

    #[error("gram matrix is singular (smallest eigenvalue {0:e}); bound undefined")]
    SingularGram(f64),

    #[error("csv input: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad caller input rather than a numerical failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::DimensionMismatch { .. }
                | Error::InvalidAlpha(_)
                | Error::NotShiftInvariant
                | Error::Csv(_)
                | Error::Io(_)
        )
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
