use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("redundant block M22 is singular (condition {condition:.3e}) for redundant index set {red_idx:?}")]
    SingularRedundantBlock { red_idx: Vec<usize>, condition: f64 },

    #[error("matrix is rank deficient or too ill-conditioned (condition {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("zero-UW constraint violated: tail residual {residual:.3e} relative to head RMS")]
    ConstraintViolation { residual: f64 },

    #[error("matrix is not a scaled isometry: squared singular value spread {spread:.3e}")]
    NotOrthogonal { spread: f64 },

    #[error("channel has {taps} taps, guard allows at most {max}")]
    ChannelTooLong { taps: usize, max: usize },

    #[error("channel coefficient on subcarrier slot {index} is zero")]
    ZeroChannelCoefficient { index: usize },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
