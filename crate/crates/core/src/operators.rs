//! Discrete operators on triangle meshes.
//!
//! Layout conventions: a per-vertex coordinate matrix `X` has one row per
//! vertex and one column per world component. The gradient operator `G`
//! maps it to `3|T| x 3`, where rows `3t..3t+3` form the block `(G X)_t`
//! whose column `c` is the world-space gradient of coordinate `c` on
//! triangle `t`. The energy operators `D` and `D^R` act on these stacked
//! blocks from the left.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::sparse::SparseOperator;
use crate::topology::{EdgeRef, EdgeTopology};

/// Below this cross-product magnitude two normals count as parallel.
pub const PARALLEL_TOLERANCE: f64 = 1e-9;

/// Which energy differential operator enters the weighted norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    /// Finite differences `E_l - E_r` replicated per component.
    Flat,
    /// Curvature-compensated `R_e E_l - E_r`.
    #[default]
    Curved,
}

impl OperatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OperatorKind::Flat => "flat",
            OperatorKind::Curved => "curved",
        }
    }
}

impl std::str::FromStr for OperatorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "flat" => Ok(OperatorKind::Flat),
            "curved" => Ok(OperatorKind::Curved),
            other => Err(format!("unknown operator kind {other:?} (expected flat or curved)")),
        }
    }
}

impl std::fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The β-weighted norm `W_β = (1 - β) A + β Dᵀ B D`.
#[derive(Debug, Clone)]
pub struct WeightedNorm {
    pub beta: f64,
    pub matrix: SparseOperator,
    pub kind: OperatorKind,
}

pub fn check_beta(beta: f64) -> Result<()> {
    if (0.0..1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::InvalidBeta { beta })
    }
}

/// Local gradient operator of triangle `t`: `G_t u` is the gradient of the
/// linear interpolant of the corner values `u = (u_i, u_j, u_k)`.
pub fn local_gradient(mesh: &Mesh, t: usize) -> Result<Matrix3<f64>> {
    let [i, j, k] = mesh.triangles()[t];
    let x = mesh.vertices();
    let frame = Matrix3::from_rows(&[
        (x[j] - x[i]).transpose(),
        (x[k] - x[i]).transpose(),
        mesh.normal(t).transpose(),
    ]);
    let inv = frame.try_inverse().ok_or(Error::SingularFrame { triangle: t })?;
    let selector = Matrix3::new(-1.0, 1.0, 0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0);
    Ok(inv * selector)
}

/// Global gradient `G ∈ R^{3|T| x |V|}`.
pub fn assemble_gradient(mesh: &Mesh) -> Result<SparseOperator> {
    let mut triplets = Vec::with_capacity(9 * mesh.num_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let g = local_gradient(mesh, t)?;
        for r in 0..3 {
            for (c, &v) in tri.iter().enumerate() {
                triplets.push((3 * t + r, v, g[(r, c)]));
            }
        }
    }
    Ok(SparseOperator::from_triplets(3 * mesh.num_triangles(), mesh.num_vertices(), triplets))
}

/// Triangle areas replicated three times: `3|T| x 3|T|` diagonal.
pub fn area_mass(mesh: &Mesh) -> SparseOperator {
    let diag: Vec<f64> = mesh.areas().iter().flat_map(|&a| [a; 3]).collect();
    SparseOperator::diagonal(&diag)
}

/// Internal edge lengths replicated `n` times: `n|E_i| x n|E_i|` diagonal.
pub fn edge_mass(topo: &EdgeTopology, n: usize) -> SparseOperator {
    let diag: Vec<f64> = topo
        .internal_edges()
        .iter()
        .flat_map(|e| std::iter::repeat_n(e.length, n))
        .collect();
    SparseOperator::diagonal(&diag)
}

/// `(A, B)` sized for three-component local energies.
pub fn assemble_masses(mesh: &Mesh, topo: &EdgeTopology) -> (SparseOperator, SparseOperator) {
    (area_mass(mesh), edge_mass(topo, 3))
}

/// `L = Gᵀ A G`.
pub fn assemble_laplacian(gradient: &SparseOperator, area: &SparseOperator) -> SparseOperator {
    gradient.gram(area)
}

/// Flat difference operator `D ⊗ I_n`, one block row per internal edge
/// computing `E_l(e) - E_r(e)`.
pub fn assemble_diff_flat(topo: &EdgeTopology, n: usize) -> SparseOperator {
    assert!(n >= 1, "block dimension must be positive");
    let scalar = SparseOperator::from_triplets(
        topo.internal_edges().len(),
        topo.num_triangles(),
        topo.internal_edges()
            .iter()
            .enumerate()
            .flat_map(|(row, e)| [(row, e.left, 1.0), (row, e.right, -1.0)]),
    );
    if n == 1 {
        scalar
    } else {
        scalar.kron_identity(n)
    }
}

/// Minimal rotation taking `from` onto `to` (both unit). Antiparallel
/// vectors rotate by π about `fallback_axis`.
pub fn minimal_rotation(from: &Vector3<f64>, to: &Vector3<f64>, fallback_axis: &Vector3<f64>) -> Matrix3<f64> {
    let axis = from.cross(to);
    let sin = axis.norm();
    let cos = from.dot(to);
    if cos < -1.0 + PARALLEL_TOLERANCE {
        return Rotation3::from_axis_angle(&Unit::new_normalize(*fallback_axis), std::f64::consts::PI).into_inner();
    }
    if sin < PARALLEL_TOLERANCE {
        return Matrix3::identity();
    }
    Rotation3::from_axis_angle(&Unit::new_unchecked(axis / sin), sin.atan2(cos)).into_inner()
}

/// Rotation `R_e` with `n_r = R_e n_l` for the internal edge with global id `edge`.
pub fn edge_rotation(mesh: &Mesh, topo: &EdgeTopology, edge: usize) -> Result<Matrix3<f64>> {
    match topo.edge(edge) {
        None => Err(Error::EdgeOutOfRange {
            edge,
            count: topo.num_edges(),
        }),
        Some(EdgeRef::Boundary(_)) => Err(Error::BoundaryEdge { edge }),
        Some(EdgeRef::Internal(slot)) => Ok(internal_edge_rotation(mesh, topo, slot)),
    }
}

fn internal_edge_rotation(mesh: &Mesh, topo: &EdgeTopology, slot: usize) -> Matrix3<f64> {
    let e = &topo.internal_edges()[slot];
    let x = mesh.vertices();
    let along = x[e.vertices[1]] - x[e.vertices[0]];
    minimal_rotation(&mesh.normal(e.left), &mesh.normal(e.right), &along)
}

/// Curvature-compensated difference operator `D^R`: block row `e` computes
/// `R_e E_l(e) - E_r(e)`.
pub fn assemble_diff_curved(mesh: &Mesh, topo: &EdgeTopology) -> SparseOperator {
    let mut triplets = Vec::with_capacity(12 * topo.internal_edges().len());
    for (row, e) in topo.internal_edges().iter().enumerate() {
        let rot = internal_edge_rotation(mesh, topo, row);
        for a in 0..3 {
            for b in 0..3 {
                triplets.push((3 * row + a, 3 * e.left + b, rot[(a, b)]));
            }
            triplets.push((3 * row + a, 3 * e.right + a, -1.0));
        }
    }
    SparseOperator::from_triplets(3 * topo.internal_edges().len(), 3 * topo.num_triangles(), triplets)
}

/// `W_β = (1 - β) A + β Dᵀ B D`.
pub fn assemble_norm(
    area: &SparseOperator,
    diff: &SparseOperator,
    edge: &SparseOperator,
    beta: f64,
    kind: OperatorKind,
) -> Result<WeightedNorm> {
    check_beta(beta)?;
    if diff.cols() != area.rows() || diff.rows() != edge.rows() {
        return Err(Error::Dimension(format!(
            "D is {}x{}, A is {}x{}, B is {}x{}",
            diff.rows(),
            diff.cols(),
            area.rows(),
            area.cols(),
            edge.rows(),
            edge.cols()
        )));
    }
    let matrix = if beta == 0.0 {
        area.clone()
    } else {
        area.add_scaled(1.0 - beta, &diff.gram(edge), beta).with_symmetry(true)
    };
    Ok(WeightedNorm { beta, matrix, kind })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cholesky::SpdFactor;
    use crate::fixtures;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `L_ij = -(cot α + cot β) / 2`, diagonal = negative row sum.
    fn cotan_laplacian(mesh: &Mesh) -> SparseOperator {
        let x = mesh.vertices();
        let mut triplets = Vec::new();
        for &[i, j, k] in mesh.triangles() {
            for (a, b, o) in [(i, j, k), (j, k, i), (k, i, j)] {
                let (u, v) = (x[a] - x[o], x[b] - x[o]);
                let cot = u.dot(&v) / u.cross(&v).norm();
                let w = 0.5 * cot;
                triplets.extend([(a, b, -w), (b, a, -w), (a, a, w), (b, b, w)]);
            }
        }
        SparseOperator::from_triplets(mesh.num_vertices(), mesh.num_vertices(), triplets)
    }

    fn unit_triangle() -> Mesh {
        Mesh::parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3").unwrap()
    }

    fn close3(a: Vector3<f64>, b: Vector3<f64>, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn local_gradient_on_unit_triangle() {
        let g = local_gradient(&unit_triangle(), 0).unwrap();
        assert_eq!(g * Vector3::new(0.0, 1.0, 0.0), Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(g * Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.0, 1.0, 0.0));
        assert!(close3(g * Vector3::repeat(3.7), Vector3::zeros(), 1e-15));
    }

    #[test]
    fn gradient_is_tangent() {
        let mesh = fixtures::capped_cylinder(10, 5, 1.0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for t in 0..mesh.num_triangles() {
            let g = local_gradient(&mesh, t).unwrap();
            let u = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let [i, j, _] = mesh.triangles()[t];
            let h = (mesh.vertices()[j] - mesh.vertices()[i]).norm();
            assert!(mesh.normal(t).dot(&(g * u)).abs() <= 1e-9 * u.norm() / h);
        }
    }

    #[test]
    fn gradient_dimensions_and_constants() {
        // One 3x3 block: three gradient components per triangle, one column per vertex.
        let g = assemble_gradient(&unit_triangle()).unwrap();
        assert_eq!((g.rows(), g.cols()), (3, 3));
        let block = g.mul_rows3(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        assert_eq!(block, vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]]);
        let mesh = fixtures::bar(3, 2, 2, [2.0, 1.0, 1.0]);
        let g = assemble_gradient(&mesh).unwrap();
        let ones = vec![1.0; mesh.num_vertices()];
        assert!(g.mul_vec(&ones).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn planar_coordinate_gradients_are_projection() {
        let mesh = fixtures::planar_grid(6, 5, 1.0);
        let g = assemble_gradient(&mesh).unwrap();
        let x: Vec<[f64; 3]> = mesh.vertices().iter().map(|v| [v.x, v.y, v.z]).collect();
        let gx = g.mul_rows3(&x);
        for t in 0..mesh.num_triangles() {
            for r in 0..3 {
                for c in 0..3 {
                    let expected = if r == c && r < 2 { 1.0 } else { 0.0 };
                    assert!((gx[3 * t + r][c] - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn masses() {
        let (a, _) = assemble_masses(&unit_triangle(), &EdgeTopology::build(&unit_triangle()).unwrap());
        assert_eq!(a.to_dense(), vec![vec![0.5, 0.0, 0.0], vec![0.0, 0.5, 0.0], vec![0.0, 0.0, 0.5]]);

        let pair = Mesh::parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3\nf 1 3 4\n").unwrap();
        let b = edge_mass(&EdgeTopology::build(&pair).unwrap(), 1);
        assert_eq!(b.to_dense(), vec![vec![2f64.sqrt()]]);

        let tet = fixtures::tetrahedron();
        let (a, b) = assemble_masses(&tet, &EdgeTopology::build(&tet).unwrap());
        for i in 0..12 {
            assert!((a.get(i, i) - 3f64.sqrt() / 4.0).abs() < 1e-14);
        }
        assert_eq!(b.rows(), 18);
    }

    #[test]
    fn laplacian_matches_cotan_formula() {
        // Independent cotangent assembly on a jittered triangular-lattice disk.
        let mesh = fixtures::hex_disk(4, 1.0, 0.08);
        let g = assemble_gradient(&mesh).unwrap();
        let l = assemble_laplacian(&g, &area_mass(&mesh));
        let cot = cotan_laplacian(&mesh);
        assert!(l.is_symmetric(1e-12));
        for i in 0..mesh.num_vertices() {
            let row_sum: f64 = l.row(i).map(|(_, v)| v).sum();
            let row_max = l.row(i).fold(0.0f64, |m, (_, v)| m.max(v.abs()));
            assert!(row_sum.abs() <= 1e-10 * row_max);
            for j in 0..mesh.num_vertices() {
                assert!((l.get(i, j) - cot.get(i, j)).abs() < 1e-12, "L[{i},{j}]");
                if i != j {
                    assert!(l.get(i, j) <= 1e-12, "positive off-diagonal at {i},{j}");
                }
            }
        }
    }

    #[test]
    fn flat_diff_examples() {
        let pair = Mesh::parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3\nf 1 3 4\n").unwrap();
        let topo = EdgeTopology::build(&pair).unwrap();
        let d = assemble_diff_flat(&topo, 1);
        let (l, r) = (topo.internal_edges()[0].left, topo.internal_edges()[0].right);
        let mut e = vec![0.0; 2];
        e[l] = 5.0;
        e[r] = 3.0;
        assert_eq!(d.mul_vec(&e), vec![2.0]);
        assert_eq!(d.mul_vec(&[4.0, 4.0]), vec![0.0]);

        let tet = fixtures::tetrahedron();
        let d3 = assemble_diff_flat(&EdgeTopology::build(&tet).unwrap(), 3);
        assert_eq!((d3.rows(), d3.cols()), (18, 12));
    }

    #[test]
    fn edge_rotation_cases() {
        // Right-angle fold about the x-axis: left triangle in z=0, right in y=0.
        let fold = Mesh::parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 2 3\nf 2 1 4\n").unwrap();
        let topo = EdgeTopology::build(&fold).unwrap();
        let e = topo.internal_edges()[0];
        assert_eq!(fold.normal(e.left), Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(fold.normal(e.right), Vector3::new(0.0, 1.0, 0.0));
        let r = edge_rotation(&fold, &topo, e.id).unwrap();
        let expected = Rotation3::from_axis_angle(&Vector3::x_axis(), -std::f64::consts::FRAC_PI_2).into_inner();
        assert!((r - expected).norm() < 1e-12);
        assert!(close3(r * Vector3::z(), Vector3::y(), 1e-12));

        let boundary = topo.boundary_edges()[0].id;
        assert!(matches!(edge_rotation(&fold, &topo, boundary), Err(Error::BoundaryEdge { .. })));
        assert!(edge_rotation(&fold, &topo, 99).is_err());

        let flat = fixtures::planar_grid(3, 3, 1.0);
        let topo = EdgeTopology::build(&flat).unwrap();
        for e in topo.internal_edges() {
            assert_eq!(edge_rotation(&flat, &topo, e.id).unwrap(), Matrix3::identity());
        }
    }

    #[test]
    fn antiparallel_normals_rotate_about_edge() {
        let r = minimal_rotation(&Vector3::z(), &-Vector3::z(), &Vector3::new(2.0, 0.0, 0.0));
        assert!((r - Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0))).norm() < 1e-12);
    }

    #[test]
    fn rotation_blocks_are_proper() {
        let mesh = fixtures::accordion(4, 3, 2, 1.0, 1.0, 70.0);
        let topo = EdgeTopology::build(&mesh).unwrap();
        for e in topo.internal_edges() {
            let r = edge_rotation(&mesh, &topo, e.id).unwrap();
            assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-9);
            assert!((r.determinant() - 1.0).abs() < 1e-9);
            assert!(close3(r * mesh.normal(e.left), mesh.normal(e.right), 1e-9));
        }
    }

    #[test]
    fn curved_diff_reduces_to_flat_on_planes() {
        let mesh = fixtures::planar_grid(5, 5, 1.0);
        let topo = EdgeTopology::build(&mesh).unwrap();
        let dr = assemble_diff_curved(&mesh, &topo);
        let d = assemble_diff_flat(&topo, 3);
        assert_eq!((dr.rows(), dr.cols()), (d.rows(), d.cols()));
        for (r, c, v) in dr.triplets().chain(d.triplets()) {
            assert!((dr.get(r, c) - d.get(r, c)).abs() < 1e-12, "entry {r},{c} = {v}");
        }
    }

    #[test]
    fn curved_diff_ignores_tangent_relative_residuals() {
        let fold = Mesh::parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 2 3\nf 2 1 4\n").unwrap();
        let topo = EdgeTopology::build(&fold).unwrap();
        let e = topo.internal_edges()[0];
        let rot = edge_rotation(&fold, &topo, e.id).unwrap();
        // Residual columns tangent to the left triangle, mapped into the right one.
        let left = Matrix3::new(0.3, -1.2, 0.5, 0.7, 0.1, -0.4, 0.0, 0.0, 0.0);
        let right = rot * left;
        let mut stacked = vec![[0.0; 3]; 6];
        for r in 0..3 {
            for c in 0..3 {
                stacked[3 * e.left + r][c] = left[(r, c)];
                stacked[3 * e.right + r][c] = right[(r, c)];
            }
        }
        let out = assemble_diff_curved(&fold, &topo).mul_rows3(&stacked);
        assert!(out.iter().flatten().all(|v| v.abs() < 1e-10));
        let flat = assemble_diff_flat(&topo, 3).mul_rows3(&stacked);
        assert!(flat.iter().flatten().any(|v| v.abs() > 0.1));
    }

    #[test]
    fn weighted_norm_properties() {
        let mesh = fixtures::accordion(3, 3, 2, 1.0, 1.0, 60.0);
        let topo = EdgeTopology::build(&mesh).unwrap();
        let (a, b) = assemble_masses(&mesh, &topo);
        let dr = assemble_diff_curved(&mesh, &topo);
        let w0 = assemble_norm(&a, &dr, &b, 0.0, OperatorKind::Curved).unwrap();
        assert_eq!(w0.matrix, a);
        assert!(matches!(assemble_norm(&a, &dr, &b, 1.0, OperatorKind::Curved), Err(Error::InvalidBeta { .. })));
        assert!(assemble_norm(&a, &dr, &b, -0.1, OperatorKind::Curved).is_err());

        let beta = 0.3;
        let w = assemble_norm(&a, &dr, &b, beta, OperatorKind::Curved).unwrap();
        assert!(w.matrix.is_symmetric(1e-12));
        SpdFactor::new(&w.matrix).expect("W_β is positive definite for β < 1");

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<[f64; 3]> = (0..a.rows())
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let trace = |m: &SparseOperator, y: &[[f64; 3]]| -> f64 {
            let my = m.mul_rows3(y);
            y.iter().zip(&my).map(|(u, v)| u[0] * v[0] + u[1] * v[1] + u[2] * v[2]).sum()
        };
        let dy = dr.mul_rows3(&y);
        let lhs = trace(&w.matrix, &y);
        let rhs = (1.0 - beta) * trace(&a, &y) + beta * trace(&b, &dy);
        assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs());
        assert!(lhs > 0.0);
    }

    #[test]
    fn single_triangle_norm_is_scaled_area() {
        let mesh = unit_triangle();
        let topo = EdgeTopology::build(&mesh).unwrap();
        let (a, b) = assemble_masses(&mesh, &topo);
        let d = assemble_diff_curved(&mesh, &topo);
        assert_eq!(d.rows(), 0);
        for beta in [0.0, 0.2, 0.9] {
            let w = assemble_norm(&a, &d, &b, beta, OperatorKind::Curved).unwrap();
            for i in 0..3 {
                assert!((w.matrix.get(i, i) - (1.0 - beta) * 0.5).abs() < 1e-15);
            }
        }
    }
}
