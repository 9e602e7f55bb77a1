//! Reduced normal equations `Gᵀ W_β G X = Gᵀ W_β Z` with positional
//! constraints eliminated, plus a per-key cache of factorizations.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::cholesky::SpdFactor;
use crate::error::{Error, Result};
use crate::guidance::{GuidanceField, Partition};
use crate::mesh::Mesh;
use crate::operators::{OperatorKind, WeightedNorm};
use crate::sparse::SparseOperator;

/// Solves whose relative residual exceeds this are rejected.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Factorized reduced system for one (mesh, partition, β, operator kind).
#[derive(Debug)]
pub struct SolverContext {
    partition: Partition,
    beta: f64,
    kind: OperatorKind,
    k_ff: SparseOperator,
    k_fc: SparseOperator,
    /// Free rows of `Gᵀ W`.
    load_f: SparseOperator,
    factor: SpdFactor,
    factorize_time: Duration,
    solves: AtomicU64,
}

/// Output of [`SolverContext::solve`].
#[derive(Debug, Clone)]
pub struct Solution {
    pub positions: Vec<Vector3<f64>>,
    pub residual: f64,
    pub solve_time: Duration,
}

fn rows_to_columns(rows: &[[f64; 3]]) -> Vec<f64> {
    let n = rows.len();
    let mut out = vec![0.0; 3 * n];
    for (i, r) in rows.iter().enumerate() {
        for c in 0..3 {
            out[c * n + i] = r[c];
        }
    }
    out
}

impl SolverContext {
    /// Splits `Gᵀ W G` by the partition and factorizes the free block.
    pub fn factorize(mesh: &Mesh, gradient: &SparseOperator, norm: &WeightedNorm, partition: &Partition) -> Result<Self> {
        crate::operators::check_beta(norm.beta)?;
        if gradient.cols() != mesh.num_vertices() || gradient.rows() != norm.matrix.rows() {
            return Err(Error::Dimension(format!(
                "gradient is {}x{}, norm is {}x{}, mesh has {} vertices",
                gradient.rows(),
                gradient.cols(),
                norm.matrix.rows(),
                norm.matrix.cols(),
                mesh.num_vertices()
            )));
        }
        let started = Instant::now();
        let load = gradient.transpose().matmul(&norm.matrix);
        let system = load.matmul(gradient).symmetrized();
        Self::from_system(mesh, partition, norm.beta, norm.kind, &system, &load, started)
    }

    /// Builds a context from an assembled `|V| x |V|` system `Gᵀ W G` and
    /// load operator `Gᵀ W`. The reported factorization time runs from
    /// `started`.
    pub fn from_system(
        mesh: &Mesh,
        partition: &Partition,
        beta: f64,
        kind: OperatorKind,
        system: &SparseOperator,
        load: &SparseOperator,
        started: Instant,
    ) -> Result<Self> {
        crate::operators::check_beta(beta)?;
        let n = mesh.num_vertices();
        if partition.num_vertices() != n || system.rows() != n || system.cols() != n || load.rows() != n {
            return Err(Error::Dimension(format!(
                "partition covers {} vertices, system is {}x{}, load has {} rows, mesh has {n} vertices",
                partition.num_vertices(),
                system.rows(),
                system.cols(),
                load.rows()
            )));
        }
        partition.check_components(mesh)?;
        let free = partition.free();
        let k_ff = system.select(free, free).with_symmetry(true);
        let (factor, (k_fc, load_f)) = rayon::join(
            || SpdFactor::new(&k_ff),
            || {
                let all_cols: Vec<usize> = (0..load.cols()).collect();
                (system.select(free, partition.constrained()), load.select(free, &all_cols))
            },
        );
        let factor = factor?;
        Ok(SolverContext {
            partition: partition.clone(),
            beta,
            kind,
            k_ff,
            k_fc,
            load_f,
            factor,
            factorize_time: started.elapsed(),
            solves: AtomicU64::new(0),
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn factorize_time(&self) -> Duration {
        self.factorize_time
    }

    pub fn factor_nnz(&self) -> usize {
        self.factor.factor_nnz()
    }

    /// Number of solves served so far.
    pub fn solves(&self) -> u64 {
        self.solves.load(Ordering::Relaxed)
    }

    pub fn matches(&self, partition: &Partition) -> bool {
        self.partition.fingerprint() == partition.fingerprint() && self.partition == *partition
    }

    /// `X_f = K_ff⁻¹ (G_fᵀ W Z - K_fc X_c)`; constrained rows are copied
    /// verbatim from `constrained`, which must cover exactly the
    /// partition's constrained vertices.
    pub fn solve(&self, guidance: &GuidanceField, constrained: &BTreeMap<usize, Vector3<f64>>) -> Result<Solution> {
        let start = Instant::now();
        let expected = self.partition.constrained();
        if constrained.len() != expected.len() || !constrained.keys().zip(expected).all(|(a, b)| a == b) {
            return Err(Error::PartitionMismatch(format!(
                "{} constrained positions given, context expects {}",
                constrained.len(),
                expected.len()
            )));
        }
        if guidance.len() * 3 != self.load_f.cols() {
            return Err(Error::Dimension(format!(
                "guidance has {} blocks, context expects {}",
                guidance.len(),
                self.load_f.cols() / 3
            )));
        }
        let xc: Vec<[f64; 3]> = constrained.values().map(|p| [p.x, p.y, p.z]).collect();
        let load = self.load_f.mul_rows3(&guidance.to_rows());
        let coupling = self.k_fc.mul_rows3(&xc);
        let rhs: Vec<[f64; 3]> = load
            .iter()
            .zip(&coupling)
            .map(|(l, c)| [l[0] - c[0], l[1] - c[1], l[2] - c[2]])
            .collect();

        let mut columns = rows_to_columns(&rhs);
        self.factor.solve_in_place(&mut columns, 3);
        let nf = rhs.len();
        let xf: Vec<[f64; 3]> = (0..nf).map(|i| [columns[i], columns[nf + i], columns[2 * nf + i]]).collect();

        let kx = self.k_ff.mul_rows3(&xf);
        let (mut err, mut norm) = (0.0, 0.0);
        for (k, b) in kx.iter().zip(&rhs) {
            for c in 0..3 {
                err += (k[c] - b[c]).powi(2);
                norm += b[c].powi(2);
            }
        }
        let residual = if norm > 0.0 { (err / norm).sqrt() } else { err.sqrt() };
        if !(residual <= RESIDUAL_TOLERANCE) {
            return Err(Error::Residual {
                residual,
                tolerance: RESIDUAL_TOLERANCE,
            });
        }

        let mut positions = vec![Vector3::zeros(); self.partition.num_vertices()];
        for (&v, p) in constrained {
            positions[v] = *p;
        }
        for (&v, x) in self.partition.free().iter().zip(&xf) {
            positions[v] = Vector3::new(x[0], x[1], x[2]);
        }
        self.solves.fetch_add(1, Ordering::Relaxed);
        Ok(Solution {
            positions,
            residual,
            solve_time: start.elapsed(),
        })
    }
}

/// Energies of a deformed configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Energies {
    /// Area-weighted squared residual.
    pub e_p: f64,
    /// Edge-weighted squared variation of residuals.
    pub e_r: f64,
    /// `(1 - β) e_p + β e_r`.
    pub e_beta: f64,
}

/// Energies of `R = G X - Z` under the area mass, the edge mass and the
/// difference operator `diff`.
pub fn total_energies(
    gradient: &SparseOperator,
    beta: f64,
    area: &SparseOperator,
    diff: &SparseOperator,
    edge: &SparseOperator,
    positions: &[Vector3<f64>],
    guidance: &GuidanceField,
) -> Energies {
    let gx = GuidanceField::gradients_of(gradient, positions);
    let residual = gx.sub(guidance).to_rows();
    let weighted = |mass: &SparseOperator, rows: &[[f64; 3]]| -> f64 {
        let m = mass.mul_rows3(rows);
        rows.iter().zip(&m).map(|(r, s)| r[0] * s[0] + r[1] * s[1] + r[2] * s[2]).sum::<f64>().max(0.0)
    };
    let e_p = weighted(area, &residual);
    let e_r = weighted(edge, &diff.mul_rows3(&residual));
    Energies {
        e_p,
        e_r,
        e_beta: (1.0 - beta) * e_p + beta * e_r,
    }
}

/// Identifies a factorization: partition fingerprint, β bits and operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub partition: u64,
    pub beta_bits: u64,
    pub kind: OperatorKind,
}

impl CacheKey {
    pub fn new(partition: &Partition, beta: f64, kind: OperatorKind) -> Self {
        CacheKey {
            partition: partition.fingerprint(),
            beta_bits: beta.to_bits(),
            kind,
        }
    }
}

type Slot = Arc<Mutex<Option<Arc<SolverContext>>>>;

/// Factorization cache with at-most-once construction per key. Lookups for
/// different keys do not block each other.
#[derive(Debug, Default)]
pub struct ContextCache {
    slots: Mutex<HashMap<CacheKey, Slot>>,
    factorizations: AtomicU64,
}

impl ContextCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the cached context for `key`, building it with `build` on a
    /// miss. The flag is `true` on a hit. Failed builds are not cached.
    pub fn get_or_factorize(
        &self,
        key: CacheKey,
        build: impl FnOnce() -> Result<SolverContext>,
    ) -> Result<(Arc<SolverContext>, bool)> {
        let slot = {
            let mut slots = self.slots.lock().unwrap_or_else(|e| e.into_inner());
            slots.entry(key).or_default().clone()
        };
        let mut guard = slot.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(ctx) = guard.as_ref() {
            return Ok((ctx.clone(), true));
        }
        let ctx = Arc::new(build()?);
        self.factorizations.fetch_add(1, Ordering::Relaxed);
        *guard = Some(ctx.clone());
        Ok((ctx, false))
    }

    pub fn factorizations(&self) -> u64 {
        self.factorizations.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.slots.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops every cached context; the factorization counter is kept.
    pub fn clear(&self) {
        self.slots.lock().unwrap_or_else(|e| e.into_inner()).clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::guidance::{build_guidance, constrained_positions, solve_harmonic_weights, HandleRegion, HandleSet, Transform};
    use crate::operators::{assemble_diff_curved, assemble_gradient, assemble_laplacian, assemble_masses, assemble_norm};
    use crate::topology::EdgeTopology;

    struct Setup {
        mesh: Mesh,
        g: SparseOperator,
        a: SparseOperator,
        b: SparseOperator,
        d: SparseOperator,
        l: SparseOperator,
    }

    fn setup(mesh: Mesh) -> Setup {
        let topo = EdgeTopology::build(&mesh).unwrap();
        let g = assemble_gradient(&mesh).unwrap();
        let (a, b) = assemble_masses(&mesh, &topo);
        let d = assemble_diff_curved(&mesh, &topo);
        let l = assemble_laplacian(&g, &a);
        Setup { mesh, g, a, b, d, l }
    }

    fn run(s: &Setup, regions: Vec<HandleRegion>, transforms: Vec<Transform>, beta: f64) -> (Vec<Vector3<f64>>, GuidanceField) {
        let p = Partition::new(regions, s.mesh.num_vertices()).unwrap();
        let w = solve_harmonic_weights(&s.mesh, &s.l, &p).unwrap();
        let set = HandleSet::new(&s.mesh, p.clone(), transforms).unwrap();
        let z = build_guidance(&s.mesh, &s.g, &w, &set).unwrap();
        let norm = assemble_norm(&s.a, &s.d, &s.b, beta, OperatorKind::Curved).unwrap();
        let ctx = SolverContext::factorize(&s.mesh, &s.g, &norm, &p).unwrap();
        let sol = ctx.solve(&z, &constrained_positions(&s.mesh, &set)).unwrap();
        assert!(sol.residual <= RESIDUAL_TOLERANCE);
        (sol.positions, z)
    }

    #[test]
    fn identity_guidance_reproduces_rest() {
        let s = setup(fixtures::capped_cylinder(12, 6, 1.0, 2.0));
        let regions = vec![HandleRegion::new("a", vec![0, 1]), HandleRegion::new("b", vec![50])];
        for beta in [0.0, 0.3] {
            let (x, z) = run(&s, regions.clone(), vec![Transform::identity(); 2], beta);
            let diag = s.mesh.bbox_diagonal();
            for (p, q) in x.iter().zip(s.mesh.vertices()) {
                assert!((p - q).norm() < 1e-6 * diag);
            }
            let e = total_energies(&s.g, beta, &s.a, &s.d, &s.b, &x, &z);
            assert!(e.e_p < 1e-20 && e.e_r < 1e-20);
        }
    }

    #[test]
    fn one_free_vertex() {
        let s = setup(fixtures::tetrahedron());
        let (x, _) = run(&s, vec![HandleRegion::new("a", vec![0, 1, 2])], vec![Transform::identity()], 0.2);
        assert!((x[3] - s.mesh.vertices()[3]).norm() < 1e-12);
    }

    #[test]
    fn unanchored_component_fails() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nv 5 0 0\nv 6 0 0\nv 5 1 0\nv 6 1 0\nf 1 2 3\nf 2 4 3\nf 5 6 7\nf 6 8 7\n";
        let s = setup(Mesh::parse_obj(text).unwrap());
        let p = Partition::new(vec![HandleRegion::new("a", vec![0])], 8).unwrap();
        let norm = assemble_norm(&s.a, &s.d, &s.b, 0.0, OperatorKind::Curved).unwrap();
        assert!(matches!(SolverContext::factorize(&s.mesh, &s.g, &norm, &p), Err(Error::UnconstrainedComponent { .. })));
    }

    #[test]
    fn mismatched_constraints_rejected() {
        let s = setup(fixtures::planar_grid(3, 3, 1.0));
        let p = Partition::new(vec![HandleRegion::new("a", vec![0])], 16).unwrap();
        let norm = assemble_norm(&s.a, &s.d, &s.b, 0.0, OperatorKind::Curved).unwrap();
        let ctx = SolverContext::factorize(&s.mesh, &s.g, &norm, &p).unwrap();
        let z = GuidanceField::gradients_of(&s.g, s.mesh.vertices());
        let wrong: BTreeMap<usize, Vector3<f64>> = [(1, Vector3::zeros())].into();
        assert!(matches!(ctx.solve(&z, &wrong), Err(Error::PartitionMismatch(_))));
    }

    #[test]
    fn constant_positions_have_zero_energy_for_zero_guidance() {
        let s = setup(fixtures::bar(3, 2, 2, [2.0, 1.0, 1.0]));
        let x = vec![Vector3::new(0.3, -2.0, 1.0); s.mesh.num_vertices()];
        let z = GuidanceField {
            blocks: vec![nalgebra::Matrix3::zeros(); s.mesh.num_triangles()],
        };
        let e = total_energies(&s.g, 0.5, &s.a, &s.d, &s.b, &x, &z);
        assert!(e.e_p < 1e-24 && e.e_r < 1e-24 && e.e_beta < 1e-24);
    }

    #[test]
    fn solution_is_stationary() {
        let s = setup(fixtures::capped_cylinder(10, 6, 1.0, 2.0));
        let (b, t) = fixtures::cap_centers(10, 6);
        let beta = 0.3;
        let (x, z) = run(
            &s,
            vec![HandleRegion::new("a", vec![b]), HandleRegion::new("b", vec![t])],
            vec![Transform::identity(), Transform::rotation_about(Vector3::z(), 1.0)],
            beta,
        );
        let base = total_energies(&s.g, beta, &s.a, &s.d, &s.b, &x, &z).e_beta;
        let mut state = 17u64;
        for _ in 0..5 {
            let mut y = x.clone();
            for (v, p) in y.iter_mut().enumerate() {
                if v == b || v == t {
                    continue;
                }
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let r = (state >> 33) as f64 / (1u64 << 31) as f64 - 1.0;
                *p += Vector3::new(r, -0.5 * r, 0.25) * 1e-4;
            }
            assert!(total_energies(&s.g, beta, &s.a, &s.d, &s.b, &y, &z).e_beta >= base - 1e-9);
        }
    }

    #[test]
    fn cache_builds_once_per_key() {
        let s = setup(fixtures::planar_grid(4, 4, 1.0));
        let p = Partition::new(vec![HandleRegion::new("a", vec![0, 1])], 25).unwrap();
        let cache = ContextCache::new();
        let build = |beta: f64| {
            let norm = assemble_norm(&s.a, &s.d, &s.b, beta, OperatorKind::Curved).unwrap();
            SolverContext::factorize(&s.mesh, &s.g, &norm, &p)
        };
        let (_, hit) = cache.get_or_factorize(CacheKey::new(&p, 0.2, OperatorKind::Curved), || build(0.2)).unwrap();
        assert!(!hit);
        let (_, hit) = cache.get_or_factorize(CacheKey::new(&p, 0.2, OperatorKind::Curved), || build(0.2)).unwrap();
        assert!(hit);
        cache.get_or_factorize(CacheKey::new(&p, 0.4, OperatorKind::Curved), || build(0.4)).unwrap();
        assert_eq!(cache.factorizations(), 2);
        assert!(cache.get_or_factorize(CacheKey::new(&p, 0.5, OperatorKind::Flat), || Err(Error::Backend("x".into()))).is_err());
        assert_eq!(cache.factorizations(), 2);
        cache.clear();
        assert!(cache.is_empty());
    }
}
