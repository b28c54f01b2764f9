use thiserror::Error;

/// Errors raised across the fitting pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("dataset has no observations")]
    EmptyData,

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("component {component} has a degenerate block: recovered covariance is not SPD")]
    DegenerateBlock { component: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("workspace was built for a different point (generation {built} vs {current})")]
    StaleWorkspace { built: u64, current: u64 },

    #[error("gradient is zero")]
    ZeroGradient,

    #[error("initialization error: {0}")]
    Initialization(String),

    #[error("too few points: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("component {component} collapsed (responsibility mass {mass:e})")]
    DegenerateComponent { component: usize, mass: f64 },

    #[error("separation constraint could not be satisfied after {retries} retries")]
    SeparationUnsatisfiable { retries: usize },

    #[error("component count mismatch: {left} vs {right}")]
    ComponentCountMismatch { left: usize, right: usize },

    #[error("label length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
