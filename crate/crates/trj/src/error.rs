//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate face {face}: area {area:.3e} below 1e-12")]
    DegenerateFace { face: usize, area: f64 },

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("poisson system: {0}")]
    Poisson(String),

    #[error("eigensolver failed on {0}")]
    Eigensolver(String),

    #[error("empty attention window")]
    EmptyWindow,

    #[error("integration aborted at frame {frame}: non-finite rate")]
    IntegrationDiverged { frame: usize },

    #[error("training aborted at epoch {epoch}: non-finite loss")]
    NonFiniteLoss { epoch: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("skinning weights row {row} sums to {sum}, expected 1 within 1e-8")]
    BadSkinWeights { row: usize, sum: f64 },

    #[error("transform for frame {frame} is not rigid (det = {det})")]
    NonRigidTransform { frame: usize, det: f64 },

    #[error("invalid generator config: {0}")]
    GeneratorConfig(String),

    #[error("missing ground truth: {0}")]
    MissingGroundTruth(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn shape(context: impl Into<String>, expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected: expected.into(),
            actual: actual.into(),
        }
    }
}
