use thiserror::Error;

#[derive(Debug, Error)]
pub enum AmberError {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid mesh: {0}")]
    Mesh(String),
    #[error("non-manifold edge ({0}, {1}) borders more than two triangles")]
    NonManifoldEdge(usize, usize),
    #[error("element cap of {cap} exceeded")]
    ElementCap { cap: usize },
    #[error("mesher: {0}")]
    Mesher(String),
    #[error("rejection sampling failed after {0} attempts")]
    Sampling(usize),
    #[error("conjugate gradients stopped after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("{0}")]
    InvalidInput(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, AmberError>;
