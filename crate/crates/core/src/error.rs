use thiserror::Error;

use crate::measurement::MleEstimate;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("{n} sites exceeds the dense cap of {cap}")]
    CapExceeded { n: usize, cap: usize },

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("unsupported local dimension d = {0}")]
    UnsupportedDimension(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("operator has zero trace")]
    ZeroTrace,

    #[error("reference operator has zero norm")]
    ZeroNorm,

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("block data is missing block {0}")]
    MissingBlock(usize),

    #[error("maximum likelihood did not converge after {iterations} iterations")]
    MleNotConverged {
        iterations: usize,
        best: Box<MleEstimate>,
    },

    #[error("malformed document: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::CapExceeded { .. } => "cap_exceeded",
            Error::NotHermitian { .. } => "not_hermitian",
            Error::UnsupportedDimension(_) => "unsupported_dimension",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::ZeroTrace => "zero_trace",
            Error::ZeroNorm => "zero_norm",
            Error::Singular(_) => "singular",
            Error::NonFinite(_) => "non_finite",
            Error::MissingBlock(_) => "missing_block",
            Error::MleNotConverged { .. } => "mle_not_converged",
            Error::Format(_) => "malformed_file",
            Error::Io(_) => "io",
            Error::Json(_) => "malformed_file",
            Error::Csv(_) => "csv",
        }
    }
}
