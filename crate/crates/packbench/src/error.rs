use thiserror::Error;

/// Errors produced by the packing engine.
#[derive(Debug, Error)]
pub enum PackError {
    #[error("empty voxel grid")]
    EmptyGrid,
    #[error("angle {0} rad is not in the configured orientation set")]
    AngleNotInSet(f64),
    #[error("degenerate shape dimensions: {0}")]
    DegenerateShape(String),
    #[error("open or non-manifold mesh: {0}")]
    OpenMesh(String),
    #[error("footprint out of bounds at ({x}, {y})")]
    OutOfBounds { x: usize, y: usize },
    #[error("illegal placement: {0}")]
    IllegalPlacement(String),
    #[error("no legal placement exists")]
    NoSpace,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PackError>;
