use thiserror::Error;

/// Errors produced anywhere in the skeleton / projection / learning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("keypoint {keypoint} is at or behind the camera plane (denominator {denominator:.3e})")]
    DepthSingularity { keypoint: usize, denominator: f64 },
    #[error("invalid model at `{path}`: {reason}")]
    InvalidModel { path: String, reason: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no valid parameter sample after {0} tries")]
    RejectionExhausted(usize),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("training diverged at epoch {epoch} (last finite loss {last_finite_loss:.6e})")]
    Divergence { epoch: usize, last_finite_loss: f64 },
    #[error("{skipped} of {total} samples hit a depth singularity in one epoch")]
    TooManySkipped { skipped: usize, total: usize },
    #[error("skeleton spec hash mismatch: {0}")]
    SpecMismatch(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
