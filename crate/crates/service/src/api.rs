//! Request and response bodies, and the mapping of pipeline errors to
//! HTTP status codes.

use std::collections::BTreeMap;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use harmonica_core::scenario::TransformSpec;
use harmonica_core::{Energies, Error, MeshError, OperatorKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub diagonal: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub id: String,
    pub num_vertices: usize,
    pub num_triangles: usize,
    pub bbox: BoundingBox,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub num_vertices: usize,
    pub num_triangles: usize,
    pub handles: Vec<String>,
    pub factorizations: u64,
    pub deforms: u64,
    pub cached_contexts: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandleDef {
    pub name: String,
    pub vertices: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandlesRequest {
    pub handles: Vec<HandleDef>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HandlesAccepted {
    pub handles: Vec<String>,
    pub constrained: usize,
    pub free: usize,
}

/// Harmonic weights, one row per vertex with one column per handle.
#[derive(Debug, Serialize, Deserialize)]
pub struct WeightsResponse {
    pub handles: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformRequest {
    /// Keyed by handle name; handles left out stay in place.
    #[serde(default)]
    pub transforms: BTreeMap<String, TransformSpec>,
    pub beta: f64,
    #[serde(default)]
    pub operator: OperatorKind,
    /// Encoding of `positions`: little-endian `f32` (default) or `f64`.
    #[serde(default)]
    pub precision: Precision,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Timings {
    pub factorize_ms: f64,
    pub guidance_ms: f64,
    pub solve_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DeformResponse {
    /// Base64 of `3 |V|` little-endian floats, `x y z` per vertex.
    pub positions: String,
    pub precision: Precision,
    pub num_vertices: usize,
    /// Local energy per triangle.
    pub energy: Vec<f64>,
    /// Base64 of `3 |T|` bytes, RGB per triangle.
    pub colors: String,
    pub p95: f64,
    pub max_iso: f64,
    pub max_conf: f64,
    pub energies: Energies,
    pub residual: f64,
    pub timings: Timings,
    pub cache_hit: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error: message.into(),
                code: None,
                line: None,
            },
        }
    }

    pub fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown session {id}"))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl From<MeshError> for ApiError {
    fn from(e: MeshError) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: ErrorBody {
                error: e.to_string(),
                code: Some(e.code().to_string()),
                line: e.line(),
            },
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Mesh(m) => m.into(),
            Error::Io { .. } | Error::Backend(_) | Error::Residual { .. } => Self::internal(e.to_string()),
            other => Self::new(StatusCode::UNPROCESSABLE_ENTITY, other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
