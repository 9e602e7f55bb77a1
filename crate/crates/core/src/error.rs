use thiserror::Error;

use crate::mesh::MeshError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] MeshError),

    #[error("triangle {triangle} has a singular frame matrix")]
    SingularFrame { triangle: usize },

    #[error("edge {edge} is a boundary edge and has no right triangle")]
    BoundaryEdge { edge: usize },

    #[error("edge id {edge} out of range ({count} edges)")]
    EdgeOutOfRange { edge: usize, count: usize },

    #[error("regularization weight β = {beta} is outside [0, 1)")]
    InvalidBeta { beta: f64 },

    #[error("invalid handle set: {0}")]
    InvalidHandles(String),

    #[error("quaternion ({w}, {x}, {y}, {z}) is not unit length (|q| = {norm})")]
    NonUnitQuaternion { w: f64, x: f64, y: f64, z: f64, norm: f64 },

    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),

    #[error(
        "connected component {component} (containing vertex {vertex}) has no constrained vertex; \
         the reduced system is singular"
    )]
    UnconstrainedComponent { component: usize, vertex: usize },

    #[error("reduced system is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error(
        "blended rotation at triangle {triangle} cancels out (|q| = {norm:e}); \
         use smaller rotation differences between handles"
    )]
    QuaternionCancellation { triangle: usize, norm: f64 },

    #[error("constrained positions do not match the factorized handle partition: {0}")]
    PartitionMismatch(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("linear solve residual {residual:e} exceeds tolerance {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },

    #[error("cholesky backend failure: {0}")]
    Backend(String),

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
