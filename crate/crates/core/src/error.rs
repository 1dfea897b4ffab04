use thiserror::Error;

pub type Result<T> = std::result::Result<T, PilaeError>;

#[derive(Debug, Error)]
pub enum PilaeError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    /// An iterative kernel ran out of its iteration budget, or a factorization
    /// met non-finite input.
    #[error("numerical failure in {op}: {detail}")]
    Numerical { op: &'static str, detail: String },

    #[error("training failed: {0}")]
    Training(String),

    #[error("training diverged at epoch {epoch} (step size {step}): loss is not finite")]
    Divergence { epoch: usize, step: f64 },

    #[error("rank-deficient width regression design: collinear basis columns {columns:?}")]
    CollinearBasis { columns: Vec<&'static str> },

    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

impl PilaeError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        PilaeError::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        PilaeError::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn numerical(op: &'static str, detail: impl Into<String>) -> Self {
        PilaeError::Numerical {
            op,
            detail: detail.into(),
        }
    }
}
