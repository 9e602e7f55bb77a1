//! Operators assembled once per rest mesh, and the deformation pipeline on top.

use std::time::{Duration, Instant};

use nalgebra::Vector3;

use crate::error::Result;
use crate::guidance::{self, GuidanceField, HandleRegion, HandleSet, HarmonicWeights, Partition, Transform};
use crate::mesh::Mesh;
use crate::operators::{self, OperatorKind, WeightedNorm};
use crate::solver::{total_energies, Energies, SolverContext};
use crate::sparse::SparseOperator;
use crate::topology::EdgeTopology;

/// β-independent pieces of the regularization term for one operator kind:
/// with `P = D G`, `system = Pᵀ B P` and `load = Pᵀ B D`.
#[derive(Debug, Clone)]
struct RegularizationTerms {
    system: SparseOperator,
    load: SparseOperator,
}

impl RegularizationTerms {
    fn new(gradient: &SparseOperator, diff: &SparseOperator, edge: &SparseOperator) -> Self {
        let p = diff.matmul(gradient);
        let pt_b = p.transpose().matmul(edge);
        RegularizationTerms {
            system: pt_b.matmul(&p).symmetrized(),
            load: pt_b.matmul(diff),
        }
    }
}

/// A rest mesh with `G`, `A`, `B`, `L`, `D ⊗ I₃` and `D^R`.
///
/// Since `Gᵀ W_β G = (1 - β) L + β (DG)ᵀ B (DG)`, the β-independent parts
/// are assembled up front and every factorization only recombines them.
#[derive(Debug, Clone)]
pub struct Model {
    mesh: Mesh,
    topology: EdgeTopology,
    gradient: SparseOperator,
    area: SparseOperator,
    edge: SparseOperator,
    laplacian: SparseOperator,
    diff_flat: SparseOperator,
    diff_curved: SparseOperator,
    area_load: SparseOperator,
    flat_terms: RegularizationTerms,
    curved_terms: RegularizationTerms,
}

/// Result of one solve.
#[derive(Debug, Clone)]
pub struct Deformation {
    pub positions: Vec<Vector3<f64>>,
    pub guidance: GuidanceField,
    pub energies: Energies,
    pub residual: f64,
    pub solve_time: Duration,
}

impl Model {
    pub fn new(mesh: Mesh) -> Result<Self> {
        let topology = EdgeTopology::build(&mesh)?;
        let gradient = operators::assemble_gradient(&mesh)?;
        let (area, edge) = operators::assemble_masses(&mesh, &topology);
        let laplacian = operators::assemble_laplacian(&gradient, &area);
        let diff_flat = operators::assemble_diff_flat(&topology, 3);
        let diff_curved = operators::assemble_diff_curved(&mesh, &topology);
        let area_load = gradient.transpose().matmul(&area);
        let (flat_terms, curved_terms) = rayon::join(
            || RegularizationTerms::new(&gradient, &diff_flat, &edge),
            || RegularizationTerms::new(&gradient, &diff_curved, &edge),
        );
        Ok(Model {
            mesh,
            topology,
            gradient,
            area,
            edge,
            laplacian,
            diff_flat,
            diff_curved,
            area_load,
            flat_terms,
            curved_terms,
        })
    }

    pub fn from_obj(text: &str) -> Result<Self> {
        Self::new(Mesh::parse_obj(text)?)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn topology(&self) -> &EdgeTopology {
        &self.topology
    }

    pub fn gradient(&self) -> &SparseOperator {
        &self.gradient
    }

    pub fn area(&self) -> &SparseOperator {
        &self.area
    }

    pub fn edge(&self) -> &SparseOperator {
        &self.edge
    }

    pub fn laplacian(&self) -> &SparseOperator {
        &self.laplacian
    }

    pub fn diff(&self, kind: OperatorKind) -> &SparseOperator {
        match kind {
            OperatorKind::Flat => &self.diff_flat,
            OperatorKind::Curved => &self.diff_curved,
        }
    }

    pub fn norm(&self, beta: f64, kind: OperatorKind) -> Result<WeightedNorm> {
        operators::assemble_norm(&self.area, self.diff(kind), &self.edge, beta, kind)
    }

    pub fn partition(&self, regions: Vec<HandleRegion>) -> Result<Partition> {
        Partition::new(regions, self.mesh.num_vertices())
    }

    pub fn handle_set(&self, regions: Vec<HandleRegion>, transforms: Vec<Transform>) -> Result<HandleSet> {
        HandleSet::new(&self.mesh, self.partition(regions)?, transforms)
    }

    pub fn harmonic_weights(&self, partition: &Partition) -> Result<HarmonicWeights> {
        guidance::solve_harmonic_weights(&self.mesh, &self.laplacian, partition)
    }

    pub fn guidance(&self, weights: &HarmonicWeights, handles: &HandleSet) -> Result<GuidanceField> {
        guidance::build_guidance(&self.mesh, &self.gradient, weights, handles)
    }

    pub fn factorize(&self, partition: &Partition, beta: f64, kind: OperatorKind) -> Result<SolverContext> {
        operators::check_beta(beta)?;
        let started = Instant::now();
        if beta == 0.0 {
            return SolverContext::from_system(&self.mesh, partition, beta, kind, &self.laplacian, &self.area_load, started);
        }
        let terms = match kind {
            OperatorKind::Flat => &self.flat_terms,
            OperatorKind::Curved => &self.curved_terms,
        };
        let (system, load) = rayon::join(
            || self.laplacian.add_scaled(1.0 - beta, &terms.system, beta).with_symmetry(true),
            || self.area_load.add_scaled(1.0 - beta, &terms.load, beta),
        );
        SolverContext::from_system(&self.mesh, partition, beta, kind, &system, &load, started)
    }

    pub fn energies(&self, positions: &[Vector3<f64>], guidance: &GuidanceField, beta: f64, kind: OperatorKind) -> Energies {
        total_energies(&self.gradient, beta, &self.area, self.diff(kind), &self.edge, positions, guidance)
    }

    /// Solves for a precomputed guidance field.
    pub fn solve_with(&self, ctx: &SolverContext, handles: &HandleSet, guidance: GuidanceField) -> Result<Deformation> {
        if !ctx.matches(handles.partition()) {
            return Err(crate::Error::PartitionMismatch(
                "handle partition differs from the one the context was factorized for".into(),
            ));
        }
        let solution = ctx.solve(&guidance, &guidance::constrained_positions(&self.mesh, handles))?;
        let energies = self.energies(&solution.positions, &guidance, ctx.beta(), ctx.kind());
        Ok(Deformation {
            positions: solution.positions,
            guidance,
            energies,
            residual: solution.residual,
            solve_time: solution.solve_time,
        })
    }

    /// Builds the guidance from `weights` and solves with `ctx`.
    pub fn deform(&self, ctx: &SolverContext, weights: &HarmonicWeights, handles: &HandleSet) -> Result<Deformation> {
        let guidance = self.guidance(weights, handles)?;
        self.solve_with(ctx, handles, guidance)
    }

    /// Weights, factorization and solve in one call.
    pub fn deform_once(&self, handles: &HandleSet, beta: f64, kind: OperatorKind) -> Result<Deformation> {
        let weights = self.harmonic_weights(handles.partition())?;
        let ctx = self.factorize(handles.partition(), beta, kind)?;
        self.deform(&ctx, &weights, handles)
    }
}
