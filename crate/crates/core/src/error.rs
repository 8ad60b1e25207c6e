use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum TicketError {
    #[error("bad architecture: {0}")]
    BadArchitecture(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("bad parameter: {0}")]
    BadParameter(String),

    #[error("path search exhausted {examined} candidates at layer {layer}")]
    PathExhausted { layer: usize, examined: usize },

    #[error("ground set of {n} elements exceeds exact-solver cap {cap}")]
    GroundTooLarge { n: usize, cap: usize },

    #[error("construction infeasible: {0}")]
    Infeasible(String),

    #[error("pruning failed: {0}")]
    PruneFailed(String),

    #[error("{stage} stage: {source}")]
    Stage { stage: &'static str, source: Box<TicketError> },

    #[error("config: {0}")]
    Config(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TicketError>;
