//! Handle-based surface deformation in the gradient domain.
//!
//! The deformed surface is reconstructed by least-squares matching of
//! per-triangle gradients against a guidance field obtained by harmonic
//! propagation of handle transforms. The energy is integrated with a
//! β-weighted norm `W_β = (1 - β) A + β Dᵀ B D`, which penalizes spatial
//! variation of the local energy residuals. `D` is either the flat finite
//! difference across internal edges or its curvature-compensated variant
//! whose left block is the rotation aligning the two triangle normals.
//!
//! The usual entry point is [`Model`], which assembles every operator once
//! for a rest mesh and then serves weight solves, factorizations and
//! deformations.

pub mod cholesky;
pub mod error;
pub mod fixtures;
pub mod guidance;
pub mod mesh;
pub mod metrics;
pub mod operators;
pub mod pipeline;
pub mod scenario;
pub mod solver;
pub mod sparse;
pub mod topology;

pub use error::{Error, Result};
pub use guidance::{GuidanceField, HandleRegion, HandleSet, HarmonicWeights, Partition, Transform};
pub use mesh::{Mesh, MeshError};
pub use metrics::{SweepResult, SweepRow, TriangleField};
pub use operators::{OperatorKind, WeightedNorm};
pub use pipeline::{Deformation, Model};
pub use solver::{ContextCache, Energies, SolverContext};
pub use sparse::SparseOperator;
pub use topology::EdgeTopology;

pub use nalgebra::{Matrix3, UnitQuaternion, Vector3};
