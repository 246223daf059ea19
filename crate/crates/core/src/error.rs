use thiserror::Error;

/// Errors raised by estimator construction, selection and evaluation.
#[derive(Debug, Error)]
pub enum CdeError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("sample {index} has a coordinate outside [0, 1]: {value}")]
    OutOfUnitCube { index: usize, value: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("density validity budget violated: rho^d * r^(d_x/2) * m^(d_z/2) * |h|_inf^d = {lhs:.6} exceeds 1/2")]
    PerturbationBudget { lhs: f64 },

    #[error("density value {value} exceeds the declared sup bound {bound} at a proposed point")]
    SupBoundViolated { value: f64, bound: f64 },

    #[error("unsupported smoothness order: floor(beta) = {0}; numeric checks support 0 and 1 only")]
    UnsupportedSmoothness(usize),

    #[error("non-positive loss {loss} in row {row}")]
    NonPositiveLoss { row: usize, loss: f64 },

    #[error("empty candidate set")]
    NoCandidates,

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("malformed document: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CdeError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> CdeError {
    CdeError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
