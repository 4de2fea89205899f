use thiserror::Error;

/// Errors produced by the estimators and their data plumbing.
#[derive(Debug, Error)]
pub enum SdrError {
    /// An argument lies outside the domain of a link or encoding.
    #[error("domain error: {0}")]
    Domain(String),

    /// A survivor probability sits at 0 or 1, where the alternative link is singular.
    #[error("degenerate link: {0}")]
    DegenerateLink(String),

    /// Invalid tuning or shape parameter (d >= p, k > n, folds < 2, ...).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Input data violates a structural requirement.
    #[error("data error: {0}")]
    Data(String),

    #[error("predictor column `{0}` has zero variance")]
    ConstantPredictor(String),

    #[error("degenerate neighborhood: all kernel weights vanish at anchor {0}")]
    DegenerateNeighborhood(usize),

    #[error("optimizer diverged: {0}")]
    Divergence(String),

    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SdrError {
    /// Whether the error stems from bad input data rather than a failed fit.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            SdrError::Domain(_)
                | SdrError::Data(_)
                | SdrError::ConstantPredictor(_)
                | SdrError::Parse { .. }
                | SdrError::Io(_)
                | SdrError::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, SdrError>;
