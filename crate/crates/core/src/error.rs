use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid warp profile: {0}")]
    InvalidProfile(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("glue profile construction failed: {0}")]
    GlueConstruction(String),
    #[error("point {point:?} is not on wall {wall}")]
    OffWall { wall: String, point: [f64; 3] },
    #[error("non-finite value while evaluating {what} (vertex/triangle {index})")]
    NonFinite { what: String, index: usize },
    #[error("perturbation too large: {0}")]
    PerturbationTooLarge(String),
    #[error("degenerate mesh: triangle {triangle} has quality {quality:.3e}")]
    DegenerateMesh { triangle: usize, quality: f64 },
    #[error("degenerate vertex star at vertex {0}")]
    DegenerateStar(usize),
    #[error("pipeline error: {0}")]
    Pipeline(String),
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("mesh format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
