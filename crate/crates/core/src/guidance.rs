//! Handle regions, harmonic weight fields, and guidance gradients obtained
//! by blending handle transforms with harmonic weights.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3, Vector4};
use rayon::prelude::*;

use crate::cholesky::SpdFactor;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::sparse::SparseOperator;

/// Quaternions must be unit length within this tolerance.
pub const UNIT_TOLERANCE: f64 = 1e-9;
/// Blended quaternions shorter than this are rejected as cancelled.
pub const CANCELLATION_TOLERANCE: f64 = 1e-9;

/// A named set of constrained vertices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HandleRegion {
    pub name: String,
    pub vertices: Vec<usize>,
}

impl HandleRegion {
    pub fn new(name: impl Into<String>, vertices: Vec<usize>) -> Self {
        HandleRegion {
            name: name.into(),
            vertices,
        }
    }
}

/// Validated split of the vertices into handle regions and free vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    regions: Vec<HandleRegion>,
    owner: Vec<Option<usize>>,
    constrained: Vec<usize>,
    free: Vec<usize>,
    fingerprint: u64,
}

impl Partition {
    pub fn new(regions: Vec<HandleRegion>, num_vertices: usize) -> Result<Self> {
        if regions.is_empty() {
            return Err(Error::InvalidHandles("at least one handle is required".into()));
        }
        let mut owner: Vec<Option<usize>> = vec![None; num_vertices];
        for (k, region) in regions.iter().enumerate() {
            if region.vertices.is_empty() {
                return Err(Error::InvalidHandles(format!("handle {:?} has no vertices", region.name)));
            }
            for &v in &region.vertices {
                if v >= num_vertices {
                    return Err(Error::InvalidHandles(format!(
                        "handle {:?} references vertex {v}, mesh has {num_vertices}",
                        region.name
                    )));
                }
                match owner[v] {
                    Some(other) if other == k => {
                        return Err(Error::InvalidHandles(format!(
                            "handle {:?} lists vertex {v} twice",
                            region.name
                        )))
                    }
                    Some(other) => {
                        return Err(Error::InvalidHandles(format!(
                            "handles {:?} and {:?} overlap at vertex {v}",
                            regions[other].name, region.name
                        )))
                    }
                    None => owner[v] = Some(k),
                }
            }
        }
        let constrained: Vec<usize> = (0..num_vertices).filter(|&v| owner[v].is_some()).collect();
        let free: Vec<usize> = (0..num_vertices).filter(|&v| owner[v].is_none()).collect();
        if free.is_empty() {
            return Err(Error::InvalidHandles("no free vertices".into()));
        }
        let mut hasher = DefaultHasher::new();
        num_vertices.hash(&mut hasher);
        regions.iter().for_each(|r| r.vertices.hash(&mut hasher));
        Ok(Partition {
            regions,
            owner,
            constrained,
            free,
            fingerprint: hasher.finish(),
        })
    }

    pub fn regions(&self) -> &[HandleRegion] {
        &self.regions
    }

    pub fn num_handles(&self) -> usize {
        self.regions.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.owner.len()
    }

    pub fn owner(&self, v: usize) -> Option<usize> {
        self.owner[v]
    }

    /// Constrained vertices, ascending.
    pub fn constrained(&self) -> &[usize] {
        &self.constrained
    }

    /// Free vertices, ascending.
    pub fn free(&self) -> &[usize] {
        &self.free
    }

    /// Hash of the vertex assignment; handle names do not contribute.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.regions.iter().position(|r| r.name == name)
    }

    /// Fails when some connected component has no constrained vertex.
    pub fn check_components(&self, mesh: &Mesh) -> Result<()> {
        let labels = mesh.components();
        let count = labels.iter().max().map_or(0, |m| m + 1);
        let mut anchored = vec![false; count];
        for &v in &self.constrained {
            anchored[labels[v]] = true;
        }
        match anchored.iter().position(|&a| !a) {
            Some(component) => Err(Error::UnconstrainedComponent {
                component,
                vertex: labels.iter().position(|&l| l == component).unwrap_or(0),
            }),
            None => Ok(()),
        }
    }
}

/// Similarity transform of a handle: `x' = s R (x - pivot) + pivot + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    pub scale: f64,
    /// Defaults to the centroid of the handle's rest vertices.
    pub pivot: Option<Vector3<f64>>,
}

impl Default for Transform {
    fn default() -> Self {
        Transform::identity()
    }
}

impl Transform {
    pub fn identity() -> Self {
        Transform {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
            pivot: None,
        }
    }

    /// Validates a raw `(w, x, y, z)` quaternion and a scale.
    pub fn new(
        quaternion: [f64; 4],
        translation: Vector3<f64>,
        scale: f64,
        pivot: Option<Vector3<f64>>,
    ) -> Result<Self> {
        let [w, x, y, z] = quaternion;
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
            return Err(Error::NonUnitQuaternion { w, x, y, z, norm });
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidScale(scale));
        }
        Ok(Transform {
            rotation: UnitQuaternion::new_unchecked(q),
            translation,
            scale,
            pivot,
        })
    }

    pub fn rotation_about(axis: Vector3<f64>, angle: f64) -> Self {
        Transform {
            rotation: UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle),
            ..Transform::identity()
        }
    }

    pub fn with_pivot(mut self, pivot: Vector3<f64>) -> Self {
        self.pivot = Some(pivot);
        self
    }

    pub fn with_translation(mut self, translation: Vector3<f64>) -> Self {
        self.translation = translation;
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    /// Linear part `s R`.
    pub fn linear(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner() * self.scale
    }

    pub fn apply(&self, point: &Vector3<f64>, pivot: &Vector3<f64>) -> Vector3<f64> {
        self.linear() * (point - pivot) + pivot + self.translation
    }
}

/// A partition together with one transform per handle and resolved pivots.
#[derive(Debug, Clone)]
pub struct HandleSet {
    partition: Partition,
    transforms: Vec<Transform>,
    pivots: Vec<Vector3<f64>>,
}

impl HandleSet {
    pub fn new(mesh: &Mesh, partition: Partition, transforms: Vec<Transform>) -> Result<Self> {
        if partition.num_vertices() != mesh.num_vertices() {
            return Err(Error::Dimension(format!(
                "partition covers {} vertices, mesh has {}",
                partition.num_vertices(),
                mesh.num_vertices()
            )));
        }
        if transforms.len() != partition.num_handles() {
            return Err(Error::InvalidHandles(format!(
                "{} transforms for {} handles",
                transforms.len(),
                partition.num_handles()
            )));
        }
        for t in &transforms {
            let q = t.rotation.quaternion();
            if (q.norm() - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::NonUnitQuaternion {
                    w: q.w,
                    x: q.i,
                    y: q.j,
                    z: q.k,
                    norm: q.norm(),
                });
            }
            if !(t.scale > 0.0 && t.scale.is_finite()) {
                return Err(Error::InvalidScale(t.scale));
            }
        }
        let pivots = partition
            .regions()
            .iter()
            .zip(&transforms)
            .map(|(region, t)| {
                t.pivot.unwrap_or_else(|| {
                    let sum: Vector3<f64> = region.vertices.iter().map(|&v| mesh.vertices()[v]).sum();
                    sum / region.vertices.len() as f64
                })
            })
            .collect();
        Ok(HandleSet {
            partition,
            transforms,
            pivots,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    pub fn pivots(&self) -> &[Vector3<f64>] {
        &self.pivots
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }
}

/// Per-vertex harmonic weights, one column per handle, plus their
/// per-triangle averages.
#[derive(Debug, Clone)]
pub struct HarmonicWeights {
    num_handles: usize,
    vertex: Vec<f64>,
    triangle: Vec<f64>,
}

impl HarmonicWeights {
    pub fn num_handles(&self) -> usize {
        self.num_handles
    }

    pub fn num_vertices(&self) -> usize {
        self.vertex.len() / self.num_handles
    }

    pub fn num_triangles(&self) -> usize {
        self.triangle.len() / self.num_handles
    }

    pub fn vertex(&self, v: usize) -> &[f64] {
        &self.vertex[v * self.num_handles..(v + 1) * self.num_handles]
    }

    pub fn triangle(&self, t: usize) -> &[f64] {
        &self.triangle[t * self.num_handles..(t + 1) * self.num_handles]
    }

    /// Column `k` as a per-vertex field.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.vertex.chunks(self.num_handles).map(|row| row[k]).collect()
    }

    /// Builds weights from explicit per-vertex rows.
    pub fn from_vertex_weights(mesh: &Mesh, num_handles: usize, vertex: Vec<f64>) -> Self {
        assert_eq!(vertex.len(), mesh.num_vertices() * num_handles);
        let mut triangle = Vec::with_capacity(mesh.num_triangles() * num_handles);
        for tri in mesh.triangles() {
            for k in 0..num_handles {
                triangle.push(tri.iter().map(|&v| vertex[v * num_handles + k]).sum::<f64>() / 3.0);
            }
        }
        HarmonicWeights {
            num_handles,
            vertex,
            triangle,
        }
    }
}

/// Solves `L h = 0` at free vertices with `h = 1` on handle `k` and `0` on
/// the other handles, for every `k`, sharing one factorization of the
/// reduced Laplacian.
pub fn solve_harmonic_weights(mesh: &Mesh, laplacian: &SparseOperator, partition: &Partition) -> Result<HarmonicWeights> {
    partition.check_components(mesh)?;
    let n = mesh.num_vertices();
    let m = partition.num_handles();
    let free = partition.free();
    let constrained = partition.constrained();

    let l_ff = laplacian.select(free, free);
    let l_fc = laplacian.select(free, constrained);
    let factor = SpdFactor::new(&l_ff)?;

    let nf = free.len();
    let mut rhs = vec![0.0; nf * m];
    for (row, f) in free.iter().enumerate() {
        let _ = f;
        for (col, v) in l_fc.row(row) {
            let k = partition.owner(constrained[col]).expect("constrained vertex has an owner");
            rhs[k * nf + row] -= v;
        }
    }
    factor.solve_in_place(&mut rhs, m);

    let mut vertex = vec![0.0; n * m];
    for &c in constrained {
        let k = partition.owner(c).expect("constrained vertex has an owner");
        vertex[c * m + k] = 1.0;
    }
    for (row, &f) in free.iter().enumerate() {
        for k in 0..m {
            vertex[f * m + k] = rhs[k * nf + row];
        }
    }
    Ok(HarmonicWeights::from_vertex_weights(mesh, m, vertex))
}

/// Blended rotation and scale of triangle `t`: normalized weighted sum of
/// the handle quaternions, each flipped into the hemisphere of the
/// quaternion of the highest-weight handle.
pub fn blend_rotation_scale(weights: &HarmonicWeights, handles: &HandleSet, t: usize) -> Result<(UnitQuaternion<f64>, f64)> {
    let w = weights.triangle(t);
    let transforms = handles.transforms();
    let leader = w
        .iter()
        .enumerate()
        .fold(0, |best, (k, &v)| if v > w[best] { k } else { best });
    let reference = transforms[leader].rotation.coords;
    let mut sum = Vector4::zeros();
    let mut scale = 0.0;
    for (wk, tk) in w.iter().zip(transforms) {
        let q = tk.rotation.coords;
        let aligned = if q.dot(&reference) < 0.0 { -q } else { q };
        sum += aligned * *wk;
        scale += wk * tk.scale;
    }
    let norm = sum.norm();
    if norm < CANCELLATION_TOLERANCE {
        return Err(Error::QuaternionCancellation { triangle: t, norm });
    }
    Ok((UnitQuaternion::new_unchecked(Quaternion::from(sum / norm)), scale))
}

/// `M_t = s_t R(q_t)`.
pub fn blend_transforms(weights: &HarmonicWeights, handles: &HandleSet, t: usize) -> Result<Matrix3<f64>> {
    let (q, s) = blend_rotation_scale(weights, handles, t)?;
    Ok(q.to_rotation_matrix().into_inner() * s)
}

/// Stacked per-triangle 3x3 blocks, e.g. guidance gradients `Z` or `G X`.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceField {
    pub blocks: Vec<Matrix3<f64>>,
}

impl GuidanceField {
    /// `G X` for per-vertex positions `X`.
    pub fn gradients_of(gradient: &SparseOperator, positions: &[Vector3<f64>]) -> Self {
        let rows: Vec<[f64; 3]> = positions.iter().map(|p| [p.x, p.y, p.z]).collect();
        Self::from_rows(&gradient.mul_rows3(&rows))
    }

    pub fn from_rows(rows: &[[f64; 3]]) -> Self {
        assert_eq!(rows.len() % 3, 0);
        let blocks = rows
            .chunks(3)
            .map(|b| Matrix3::from_row_slice(&[b[0][0], b[0][1], b[0][2], b[1][0], b[1][1], b[1][2], b[2][0], b[2][1], b[2][2]]))
            .collect();
        GuidanceField { blocks }
    }

    pub fn to_rows(&self) -> Vec<[f64; 3]> {
        self.blocks
            .iter()
            .flat_map(|b| (0..3).map(move |r| [b[(r, 0)], b[(r, 1)], b[(r, 2)]]))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn sub(&self, other: &GuidanceField) -> GuidanceField {
        GuidanceField {
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Guidance gradients `Z_t = (G X⁰)_t M_tᵀ`. Translations do not change
/// gradients; they only enter through the positional constraints.
pub fn build_guidance(
    rest: &Mesh,
    gradient: &SparseOperator,
    weights: &HarmonicWeights,
    handles: &HandleSet,
) -> Result<GuidanceField> {
    let rest_blocks = GuidanceField::gradients_of(gradient, rest.vertices());
    let blocks = rest_blocks
        .blocks
        .par_iter()
        .enumerate()
        .map(|(t, block)| Ok(block * blend_transforms(weights, handles, t)?.transpose()))
        .collect::<Result<Vec<_>>>()?;
    Ok(GuidanceField { blocks })
}

/// Target positions of all handle vertices.
pub fn constrained_positions(rest: &Mesh, handles: &HandleSet) -> BTreeMap<usize, Vector3<f64>> {
    let mut out = BTreeMap::new();
    for ((region, transform), pivot) in handles.partition().regions().iter().zip(handles.transforms()).zip(handles.pivots()) {
        for &v in &region.vertices {
            out.insert(v, transform.apply(&rest.vertices()[v], pivot));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::operators::{area_mass, assemble_gradient, assemble_laplacian};
    use std::f64::consts::FRAC_PI_2;

    fn laplacian(mesh: &Mesh) -> SparseOperator {
        assemble_laplacian(&assemble_gradient(mesh).unwrap(), &area_mass(mesh))
    }

    fn two_handle_strip() -> (Mesh, Partition) {
        let mesh = fixtures::planar_grid(12, 3, 1.0);
        let nx = 13;
        let left: Vec<usize> = (0..4).map(|j| j * nx).collect();
        let right: Vec<usize> = (0..4).map(|j| j * nx + 12).collect();
        let p = Partition::new(vec![HandleRegion::new("a", left), HandleRegion::new("b", right)], mesh.num_vertices()).unwrap();
        (mesh, p)
    }

    #[test]
    fn partition_validation() {
        let n = 5;
        assert!(Partition::new(vec![], n).is_err());
        assert!(Partition::new(vec![HandleRegion::new("a", vec![])], n).is_err());
        assert!(Partition::new(vec![HandleRegion::new("a", vec![0, 9])], n).is_err());
        let overlap = Partition::new(vec![HandleRegion::new("a", vec![0, 1]), HandleRegion::new("b", vec![1])], n);
        assert!(matches!(overlap, Err(Error::InvalidHandles(msg)) if msg.contains("overlap")));
        let all = Partition::new(vec![HandleRegion::new("a", (0..5).collect())], n);
        assert!(matches!(all, Err(Error::InvalidHandles(msg)) if msg.contains("no free vertices")));
        let p = Partition::new(vec![HandleRegion::new("a", vec![3, 1])], n).unwrap();
        assert_eq!(p.constrained(), &[1, 3]);
        assert_eq!(p.free(), &[0, 2, 4]);
    }

    #[test]
    fn single_handle_weight_is_constant() {
        let mesh = fixtures::capped_cylinder(8, 4, 1.0, 2.0);
        let p = Partition::new(vec![HandleRegion::new("only", vec![0, 1])], mesh.num_vertices()).unwrap();
        let w = solve_harmonic_weights(&mesh, &laplacian(&mesh), &p).unwrap();
        for v in 0..mesh.num_vertices() {
            assert!((w.vertex(v)[0] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn two_handles_partition_unity() {
        let (mesh, p) = two_handle_strip();
        let l = laplacian(&mesh);
        let w = solve_harmonic_weights(&mesh, &l, &p).unwrap();
        let linf = l.norm_inf();
        for v in 0..mesh.num_vertices() {
            let row = w.vertex(v);
            assert!((row[0] + row[1] - 1.0).abs() < 1e-8);
            match p.owner(v) {
                Some(0) => assert_eq!(row, &[1.0, 0.0]),
                Some(1) => assert_eq!(row, &[0.0, 1.0]),
                _ => {}
            }
        }
        for k in 0..2 {
            let lh = l.mul_vec(&w.column(k));
            for &f in p.free() {
                assert!(lh[f].abs() <= 1e-8 * linf);
            }
        }
        // Strip with handles at both ends: weights are the linear ramp along x.
        for (v, x) in mesh.vertices().iter().enumerate() {
            assert!((w.vertex(v)[1] - x.x / 12.0).abs() < 1e-9, "vertex {v}");
        }
    }

    #[test]
    fn cylinder_rings_weights_follow_axis() {
        let rings = 10;
        let mesh = fixtures::open_cylinder(16, rings, 1.0, 3.0);
        let bottom: Vec<usize> = (0..16).collect();
        let top: Vec<usize> = (rings * 16..(rings + 1) * 16).collect();
        let p = Partition::new(vec![HandleRegion::new("bottom", bottom), HandleRegion::new("top", top)], mesh.num_vertices()).unwrap();
        let w = solve_harmonic_weights(&mesh, &laplacian(&mesh), &p).unwrap();
        let mut prev = -1.0;
        for ring in 0..=rings {
            let values: Vec<f64> = (0..16).map(|a| w.vertex(ring * 16 + a)[1]).collect();
            // 1D harmonic interpolation of the ring coordinate.
            let expected = ring as f64 / rings as f64;
            for v in &values {
                assert!((v - expected).abs() < 1e-9);
            }
            assert!(values[0] > prev);
            prev = values[0];
        }
    }

    #[test]
    fn unanchored_component_is_reported() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nv 5 0 0\nv 6 0 0\nv 5 1 0\nf 1 2 3\nf 2 4 3\nf 5 6 7\n";
        let mesh = Mesh::parse_obj(text).unwrap();
        let p = Partition::new(vec![HandleRegion::new("a", vec![0])], mesh.num_vertices()).unwrap();
        let err = solve_harmonic_weights(&mesh, &laplacian(&mesh), &p).unwrap_err();
        assert!(matches!(err, Error::UnconstrainedComponent { component: 1, vertex: 4 }));
    }

    fn weights_with(mesh: &Mesh, rows: &[f64], m: usize) -> HarmonicWeights {
        let vertex: Vec<f64> = (0..mesh.num_vertices()).flat_map(|_| rows.iter().copied()).collect();
        HarmonicWeights::from_vertex_weights(mesh, m, vertex)
    }

    fn handle_set(mesh: &Mesh, transforms: Vec<Transform>) -> HandleSet {
        let regions = (0..transforms.len()).map(|k| HandleRegion::new(format!("h{k}"), vec![k])).collect();
        let p = Partition::new(regions, mesh.num_vertices()).unwrap();
        HandleSet::new(mesh, p, transforms).unwrap()
    }

    #[test]
    fn blend_examples() {
        let mesh = fixtures::planar_grid(2, 2, 1.0);
        let rot = Transform::rotation_about(Vector3::new(1.0, 2.0, 0.5), 0.7).with_scale(1.5);
        let same = handle_set(&mesh, vec![rot, rot]);
        let m = blend_transforms(&weights_with(&mesh, &[0.3, 0.7], 2), &same, 0).unwrap();
        assert!((m - rot.linear()).norm() < 1e-12);

        let other = Transform::rotation_about(Vector3::z(), 2.0).with_scale(3.0);
        let mixed = handle_set(&mesh, vec![rot, other]);
        let m = blend_transforms(&weights_with(&mesh, &[1.0, 0.0], 2), &mixed, 0).unwrap();
        assert!((m - rot.linear()).norm() < 1e-12);

        let quarter = handle_set(&mesh, vec![Transform::identity(), Transform::rotation_about(Vector3::z(), FRAC_PI_2)]);
        let (q, s) = blend_rotation_scale(&weights_with(&mesh, &[0.5, 0.5], 2), &quarter, 0).unwrap();
        let expected = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2 / 2.0);
        assert!(q.angle_to(&expected) < 1e-12);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn blend_aligns_hemispheres() {
        let mesh = fixtures::planar_grid(2, 2, 1.0);
        let q = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 0.4);
        let flipped = Transform {
            rotation: UnitQuaternion::new_unchecked(-q.into_inner()),
            ..Transform::identity()
        };
        let set = handle_set(&mesh, vec![Transform { rotation: q, ..Transform::identity() }, flipped]);
        let (blended, _) = blend_rotation_scale(&weights_with(&mesh, &[0.5, 0.5], 2), &set, 0).unwrap();
        assert!(blended.angle_to(&q) < 1e-12);
    }

    #[test]
    fn guidance_examples() {
        let mesh = fixtures::capped_cylinder(10, 4, 1.0, 2.0);
        let g = assemble_gradient(&mesh).unwrap();
        let rest = GuidanceField::gradients_of(&g, mesh.vertices());
        let (mesh_p, p) = (
            &mesh,
            Partition::new(vec![HandleRegion::new("a", vec![0]), HandleRegion::new("b", vec![mesh.num_vertices() - 1])], mesh.num_vertices()).unwrap(),
        );
        let w = solve_harmonic_weights(mesh_p, &laplacian(mesh_p), &p).unwrap();

        let identity = HandleSet::new(&mesh, p.clone(), vec![Transform::identity(); 2]).unwrap();
        let z = build_guidance(&mesh, &g, &w, &identity).unwrap();
        for (a, b) in z.blocks.iter().zip(&rest.blocks) {
            assert!((a - b).norm() < 1e-12);
        }

        let r = Transform::rotation_about(Vector3::new(0.3, -1.0, 0.2), 1.1);
        let rotated = HandleSet::new(&mesh, p.clone(), vec![r; 2]).unwrap();
        let z = build_guidance(&mesh, &g, &w, &rotated).unwrap();
        for (a, b) in z.blocks.iter().zip(&rest.blocks) {
            assert!((a - b * r.linear().transpose()).norm() < 1e-12);
        }

        let scaled = HandleSet::new(&mesh, p, vec![Transform::identity().with_scale(2.0); 2]).unwrap();
        let z = build_guidance(&mesh, &g, &w, &scaled).unwrap();
        for (a, b) in z.blocks.iter().zip(&rest.blocks) {
            assert!((a - b * 2.0).norm() < 1e-12);
        }
    }

    #[test]
    fn guidance_is_tangent_in_rest_and_deformed_frames() {
        let mesh = fixtures::capped_cylinder(12, 5, 1.0, 2.0);
        let g = assemble_gradient(&mesh).unwrap();
        let p = Partition::new(vec![HandleRegion::new("a", vec![0]), HandleRegion::new("b", vec![mesh.num_vertices() - 1])], mesh.num_vertices()).unwrap();
        let w = solve_harmonic_weights(&mesh, &laplacian(&mesh), &p).unwrap();
        let set = HandleSet::new(
            &mesh,
            p,
            vec![Transform::rotation_about(Vector3::x(), -0.6), Transform::rotation_about(Vector3::new(0.0, 1.0, 1.0), 1.2).with_scale(1.3)],
        )
        .unwrap();
        let z = build_guidance(&mesh, &g, &w, &set).unwrap();
        for (t, block) in z.blocks.iter().enumerate() {
            let n = mesh.normal(t);
            let (q, _) = blend_rotation_scale(&w, &set, t).unwrap();
            let deformed_normal = q * n;
            // Columns are gradients on the rest triangle; rows are images of
            // rest tangent vectors under the blended map.
            assert!((n.transpose() * block).norm() < 1e-8);
            assert!((block * deformed_normal).norm() < 1e-8);
        }
    }

    #[test]
    fn constrained_position_examples() {
        let mesh = fixtures::planar_grid(4, 4, 1.0);
        let region = vec![5, 6, 9, 10];
        let part = || Partition::new(vec![HandleRegion::new("h", region.clone())], mesh.num_vertices()).unwrap();

        let pos = constrained_positions(&mesh, &HandleSet::new(&mesh, part(), vec![Transform::identity()]).unwrap());
        for (&v, p) in &pos {
            assert_eq!(*p, mesh.vertices()[v]);
        }

        let d = Vector3::new(0.5, -1.0, 2.0);
        let pos = constrained_positions(&mesh, &HandleSet::new(&mesh, part(), vec![Transform::identity().with_translation(d)]).unwrap());
        for (&v, p) in &pos {
            assert!((p - (mesh.vertices()[v] + d)).norm() < 1e-15);
        }

        let set = HandleSet::new(&mesh, part(), vec![Transform::rotation_about(Vector3::z(), FRAC_PI_2)]).unwrap();
        let c = set.pivots()[0];
        let pos = constrained_positions(&mesh, &set);
        for (&v, p) in &pos {
            assert!(((p - c).norm() - (mesh.vertices()[v] - c).norm()).abs() < 1e-12);
            assert!((p - mesh.vertices()[v]).norm() > 0.1);
        }
    }

    #[test]
    fn transform_validation() {
        assert!(matches!(Transform::new([1.0, 0.1, 0.0, 0.0], Vector3::zeros(), 1.0, None), Err(Error::NonUnitQuaternion { .. })));
        assert!(matches!(Transform::new([1.0, 0.0, 0.0, 0.0], Vector3::zeros(), 0.0, None), Err(Error::InvalidScale(_))));
        let half = std::f64::consts::FRAC_1_SQRT_2;
        assert!(Transform::new([half, 0.0, 0.0, half], Vector3::zeros(), 1.0, None).is_ok());
    }
}
