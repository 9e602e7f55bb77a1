//! Procedural test meshes and deformation scenes.
//!
//! Every generator is deterministic; the jitter of [`hex_disk`] comes from a
//! fixed integer hash, not a random number generator.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;

use crate::guidance::{HandleRegion, Transform};
use crate::mesh::Mesh;
use crate::operators::OperatorKind;

fn build(vertices: Vec<Vector3<f64>>, triangles: Vec<[usize; 3]>) -> Mesh {
    Mesh::new(vertices, triangles).expect("fixture mesh is valid")
}

/// Flips triangles whose normal points toward `center`. Only meaningful for
/// star-shaped closed surfaces.
fn orient_outward(vertices: &[Vector3<f64>], triangles: &mut [[usize; 3]], center: Vector3<f64>) {
    for tri in triangles.iter_mut() {
        let [a, b, c] = tri.map(|v| vertices[v]);
        let normal = (b - a).cross(&(c - a));
        if normal.dot(&((a + b + c) / 3.0 - center)) < 0.0 {
            tri.swap(1, 2);
        }
    }
}

/// Regular tetrahedron with unit edge length, outward oriented.
pub fn tetrahedron() -> Mesh {
    let s = 1.0 / (2.0 * 2f64.sqrt());
    let vertices = vec![
        Vector3::new(s, s, s),
        Vector3::new(s, -s, -s),
        Vector3::new(-s, s, -s),
        Vector3::new(-s, -s, s),
    ];
    let mut triangles = vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    orient_outward(&vertices, &mut triangles, Vector3::zeros());
    build(vertices, triangles)
}

/// `nx x ny` cells in the `z = 0` plane, vertex `(i, j)` at index
/// `j * (nx + 1) + i`, normals `+z`.
pub fn planar_grid(nx: usize, ny: usize, cell: f64) -> Mesh {
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Vector3::new(i as f64 * cell, j as f64 * cell, 0.0));
        }
    }
    build(vertices, grid_triangles(nx, ny, false))
}

/// Two triangles per cell of an `nu x nv` lattice with row length `nu + 1`
/// (or `nu` when `wrap_u`).
fn grid_triangles(nu: usize, nv: usize, wrap_u: bool) -> Vec<[usize; 3]> {
    let row = if wrap_u { nu } else { nu + 1 };
    let idx = |i: usize, j: usize| j * row + if wrap_u { i % nu } else { i };
    let mut triangles = Vec::with_capacity(2 * nu * nv);
    for j in 0..nv {
        for i in 0..nu {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
    }
    triangles
}

fn cylinder_rings(n_around: usize, n_rings: usize, radius: f64, height: f64) -> Vec<Vector3<f64>> {
    let mut vertices = Vec::with_capacity(n_around * (n_rings + 1) + 2);
    for r in 0..=n_rings {
        let z = height * r as f64 / n_rings as f64;
        for a in 0..n_around {
            let theta = TAU * a as f64 / n_around as f64;
            vertices.push(Vector3::new(radius * theta.cos(), radius * theta.sin(), z));
        }
    }
    vertices
}

/// Tube along `+z` with `n_rings + 1` rings of `n_around` vertices; vertex
/// `(ring, a)` at index `ring * n_around + a`.
pub fn open_cylinder(n_around: usize, n_rings: usize, radius: f64, height: f64) -> Mesh {
    assert!(n_around >= 3 && n_rings >= 1);
    build(cylinder_rings(n_around, n_rings, radius, height), grid_triangles(n_around, n_rings, true))
}

/// Indices of the bottom and top cap centers of [`capped_cylinder`].
pub fn cap_centers(n_around: usize, n_rings: usize) -> (usize, usize) {
    let base = n_around * (n_rings + 1);
    (base, base + 1)
}

/// [`open_cylinder`] closed by two fans around extra cap-center vertices
/// (see [`cap_centers`]).
pub fn capped_cylinder(n_around: usize, n_rings: usize, radius: f64, height: f64) -> Mesh {
    assert!(n_around >= 3 && n_rings >= 1);
    let mut vertices = cylinder_rings(n_around, n_rings, radius, height);
    let mut triangles = grid_triangles(n_around, n_rings, true);
    let (bottom, top) = cap_centers(n_around, n_rings);
    vertices.push(Vector3::zeros());
    vertices.push(Vector3::new(0.0, 0.0, height));
    let last = n_rings * n_around;
    for a in 0..n_around {
        let next = (a + 1) % n_around;
        triangles.push([bottom, next, a]);
        triangles.push([top, last + a, last + next]);
    }
    build(vertices, triangles)
}

/// Closed box surface `[0, dims]` with `nx x ny x nz` cells along the axes.
pub fn bar(nx: usize, ny: usize, nz: usize, dims: [f64; 3]) -> Mesh {
    assert!(nx >= 1 && ny >= 1 && nz >= 1);
    let counts = [nx, ny, nz];
    let mut index = std::collections::HashMap::new();
    let mut vertices = Vec::new();
    let mut id = |p: [usize; 3], vertices: &mut Vec<Vector3<f64>>| -> usize {
        *index.entry(p).or_insert_with(|| {
            vertices.push(Vector3::new(
                dims[0] * p[0] as f64 / nx as f64,
                dims[1] * p[1] as f64 / ny as f64,
                dims[2] * p[2] as f64 / nz as f64,
            ));
            vertices.len() - 1
        })
    };
    let mut triangles = Vec::new();
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [0, counts[axis]] {
            for j in 0..counts[v] {
                for i in 0..counts[u] {
                    let corner = |di: usize, dj: usize| {
                        let mut p = [0; 3];
                        p[axis] = side;
                        p[u] = i + di;
                        p[v] = j + dj;
                        p
                    };
                    let a = id(corner(0, 0), &mut vertices);
                    let b = id(corner(1, 0), &mut vertices);
                    let c = id(corner(0, 1), &mut vertices);
                    let d = id(corner(1, 1), &mut vertices);
                    triangles.push([a, b, d]);
                    triangles.push([a, d, c]);
                }
            }
        }
    }
    let center = Vector3::new(dims[0], dims[1], dims[2]) / 2.0;
    orient_outward(&vertices, &mut triangles, center);
    build(vertices, triangles)
}

/// Zig-zag folded strip. The profile in the `xz` plane has `folds` straight
/// segments of length `fold_len`, alternately rising and falling at
/// `angle_deg` from the `x` axis, each split into `cells_per_fold` cells.
/// The strip extends `width` along `y` with `cells_wide` cells. Vertex
/// `(s, w)` is at index `w * (folds * cells_per_fold + 1) + s`.
pub fn accordion(
    folds: usize,
    cells_per_fold: usize,
    cells_wide: usize,
    fold_len: f64,
    width: f64,
    angle_deg: f64,
) -> Mesh {
    assert!(folds >= 1 && cells_per_fold >= 1 && cells_wide >= 1);
    let angle = angle_deg.to_radians();
    let step = fold_len / cells_per_fold as f64;
    let mut profile = vec![(0.0, 0.0)];
    for f in 0..folds {
        let dz = if f % 2 == 0 { angle.sin() } else { -angle.sin() };
        for _ in 0..cells_per_fold {
            let (x, z) = *profile.last().expect("profile starts non-empty");
            profile.push((x + step * angle.cos(), z + step * dz));
        }
    }
    let ns = profile.len() - 1;
    let mut vertices = Vec::with_capacity((ns + 1) * (cells_wide + 1));
    for w in 0..=cells_wide {
        let y = width * w as f64 / cells_wide as f64;
        vertices.extend(profile.iter().map(|&(x, z)| Vector3::new(x, y, z)));
    }
    build(vertices, grid_triangles(ns, cells_wide, false))
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Deterministic value in `[-1, 1)`.
fn hashed_unit(key: u64) -> f64 {
    (splitmix(key) >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

/// Hexagonal patch of an equilateral lattice in the `z = 0` plane with
/// `rings` rings around the center vertex. Interior vertices are displaced
/// in-plane by up to `jitter * spacing`.
pub fn hex_disk(rings: usize, spacing: f64, jitter: f64) -> Mesh {
    let n = rings as i64;
    let mut index = std::collections::HashMap::new();
    let mut vertices = Vec::new();
    for r in -n..=n {
        for q in -n..=n {
            if (q + r).abs() > n {
                continue;
            }
            let mut p = Vector3::new(spacing * (q as f64 + r as f64 / 2.0), spacing * r as f64 * 3f64.sqrt() / 2.0, 0.0);
            let interior = q.abs() < n && r.abs() < n && (q + r).abs() < n;
            if interior {
                let key = vertices.len() as u64;
                p.x += jitter * spacing * hashed_unit(2 * key);
                p.y += jitter * spacing * hashed_unit(2 * key + 1);
            }
            index.insert((q, r), vertices.len());
            vertices.push(p);
        }
    }
    let mut triangles = Vec::new();
    for r in -n..=n {
        for q in -n..=n {
            let get = |dq: i64, dr: i64| index.get(&(q + dq, r + dr)).copied();
            if let (Some(a), Some(b), Some(c)) = (get(0, 0), get(1, 0), get(0, 1)) {
                triangles.push([a, b, c]);
            }
            if let (Some(a), Some(b), Some(c)) = (get(1, 0), get(1, 1), get(0, 1)) {
                triangles.push([a, b, c]);
            }
        }
    }
    build(vertices, triangles)
}

/// A mesh with handle regions, transforms and solver settings.
#[derive(Debug, Clone)]
pub struct Scene {
    pub name: &'static str,
    pub mesh: Mesh,
    pub regions: Vec<HandleRegion>,
    pub transforms: Vec<Transform>,
    pub beta: f64,
    pub operator: OperatorKind,
}

/// Vertices within `radius` of `center`.
pub fn select_sphere(mesh: &Mesh, center: Vector3<f64>, radius: f64) -> Vec<usize> {
    mesh.vertices()
        .iter()
        .enumerate()
        .filter(|(_, p)| (*p - center).norm() <= radius)
        .map(|(i, _)| i)
        .collect()
}

/// Capped cylinder of height 4 and radius 1 with single-vertex handles at
/// the cap centers; the top cap is rotated a quarter turn about the axis.
pub fn cylinder_twist(n_around: usize, n_rings: usize) -> Scene {
    let mesh = capped_cylinder(n_around, n_rings, 1.0, 4.0);
    let (bottom, top) = cap_centers(n_around, n_rings);
    Scene {
        name: "cylinder-twist",
        mesh,
        regions: vec![HandleRegion::new("bottom", vec![bottom]), HandleRegion::new("top", vec![top])],
        transforms: vec![Transform::identity(), Transform::rotation_about(Vector3::z(), PI / 2.0)],
        beta: 0.2,
        operator: OperatorKind::Curved,
    }
}

/// Tall closed tube with the bottom cap region held fixed and three small
/// single-vertex handles near the top that are rotated and shifted.
pub fn hand(n_around: usize, n_rings: usize) -> Scene {
    let height = 5.0;
    let mesh = capped_cylinder(n_around, n_rings, 1.0, height);
    let (_, top) = cap_centers(n_around, n_rings);
    let base = select_sphere(&mesh, Vector3::zeros(), 1.05);
    let ring = |frac: f64| ((n_rings as f64 * frac).round() as usize).min(n_rings);
    let tip = vec![top];
    let side_a = vec![ring(0.8) * n_around];
    let side_b = vec![ring(0.8) * n_around + n_around / 2];
    let bend = Transform::rotation_about(Vector3::y(), 0.6).with_translation(Vector3::new(1.2, 0.0, -0.4));
    Scene {
        name: "hand",
        mesh,
        regions: vec![
            HandleRegion::new("base", base),
            HandleRegion::new("tip", tip),
            HandleRegion::new("knuckle-a", side_a),
            HandleRegion::new("knuckle-b", side_b),
        ],
        transforms: vec![
            Transform::identity(),
            bend,
            Transform::rotation_about(Vector3::y(), 0.4).with_translation(Vector3::new(0.6, 0.0, -0.1)),
            Transform::rotation_about(Vector3::y(), 0.4).with_translation(Vector3::new(0.6, 0.0, -0.1)),
        ],
        beta: 0.2,
        operator: OperatorKind::Curved,
    }
}

/// Folded strip with its first and last column of vertices as handles; the
/// last column is pulled outward and tilted.
pub fn accordion_pull() -> Scene {
    let (folds, cells, wide) = (6, 4, 4);
    let mesh = accordion(folds, cells, wide, 1.0, 2.0, 60.0);
    let row = folds * cells + 1;
    let first: Vec<usize> = (0..=wide).map(|w| w * row).collect();
    let last: Vec<usize> = (0..=wide).map(|w| w * row + row - 1).collect();
    Scene {
        name: "accordion",
        mesh,
        regions: vec![HandleRegion::new("start", first), HandleRegion::new("end", last)],
        transforms: vec![
            Transform::identity(),
            Transform::rotation_about(Vector3::y(), -0.5).with_translation(Vector3::new(1.5, 0.0, 0.5)),
        ],
        beta: 0.4,
        operator: OperatorKind::Curved,
    }
}

/// Planar grid with the left column fixed and the right column rotated in
/// plane and lifted.
pub fn planar_bend(n: usize) -> Scene {
    let mesh = planar_grid(n, n, 1.0);
    let row = n + 1;
    let left: Vec<usize> = (0..row).map(|j| j * row).collect();
    let right: Vec<usize> = (0..row).map(|j| j * row + n).collect();
    Scene {
        name: "planar",
        mesh,
        regions: vec![HandleRegion::new("left", left), HandleRegion::new("right", right)],
        transforms: vec![
            Transform::identity(),
            Transform::rotation_about(Vector3::z(), 0.5).with_translation(Vector3::new(0.5, 1.0, 0.0)),
        ],
        beta: 0.4,
        operator: OperatorKind::Curved,
    }
}

/// Box bar with one end fixed and the other end bent about `y`.
pub fn bar_bend() -> Scene {
    let mesh = bar(12, 3, 3, [6.0, 1.0, 1.0]);
    let eps = 1e-9;
    let end = |x: f64| -> Vec<usize> {
        mesh.vertices()
            .iter()
            .enumerate()
            .filter(|(_, p)| (p.x - x).abs() < eps)
            .map(|(i, _)| i)
            .collect()
    };
    let (start, finish) = (end(0.0), end(6.0));
    Scene {
        name: "bar",
        regions: vec![HandleRegion::new("fixed", start), HandleRegion::new("bent", finish)],
        mesh,
        transforms: vec![
            Transform::identity(),
            Transform::rotation_about(Vector3::y(), -PI / 3.0).with_translation(Vector3::new(-1.0, 0.0, 2.0)),
        ],
        beta: 0.2,
        operator: OperatorKind::Curved,
    }
}

/// Tetrahedron with one fixed vertex and one rotated vertex.
pub fn tetrahedron_pull() -> Scene {
    Scene {
        name: "tetrahedron",
        mesh: tetrahedron(),
        regions: vec![HandleRegion::new("a", vec![0]), HandleRegion::new("b", vec![3])],
        transforms: vec![
            Transform::identity(),
            Transform::rotation_about(Vector3::x(), 0.3).with_translation(Vector3::new(0.0, 0.0, 0.2)),
        ],
        beta: 0.2,
        operator: OperatorKind::Curved,
    }
}

/// Every bundled scene at a size suited to quick runs.
pub fn bundled_scenes() -> Vec<Scene> {
    vec![
        tetrahedron_pull(),
        cylinder_twist(40, 48),
        hand(24, 30),
        accordion_pull(),
        planar_bend(20),
        bar_bend(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::EdgeTopology;

    fn signed_volume(mesh: &Mesh) -> f64 {
        mesh.triangles()
            .iter()
            .map(|&[a, b, c]| {
                let x = mesh.vertices();
                x[a].dot(&x[b].cross(&x[c])) / 6.0
            })
            .sum()
    }

    fn area_weighted_normal_sum(mesh: &Mesh) -> Vector3<f64> {
        (0..mesh.num_triangles()).map(|t| mesh.normal(t) * mesh.area(t)).sum()
    }

    #[test]
    fn tetrahedron_is_regular_and_outward() {
        let mesh = tetrahedron();
        for &[a, b, c] in mesh.triangles() {
            for (p, q) in [(a, b), (b, c), (c, a)] {
                assert!(((mesh.vertices()[p] - mesh.vertices()[q]).norm() - 1.0).abs() < 1e-14);
            }
        }
        assert!((signed_volume(&mesh) - 1.0 / (6.0 * 2f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn closed_fixtures_are_watertight() {
        for mesh in [tetrahedron(), capped_cylinder(12, 7, 1.0, 2.0), bar(4, 2, 3, [2.0, 1.0, 1.5])] {
            let topo = EdgeTopology::build(&mesh).unwrap();
            assert!(topo.is_closed());
            assert_eq!(2 * topo.num_edges(), 3 * mesh.num_triangles());
            assert!(signed_volume(&mesh) > 0.0);
            assert!(area_weighted_normal_sum(&mesh).norm() <= 1e-9 * mesh.total_area());
            for e in topo.internal_edges() {
                // Consistent orientation: exactly one side traverses the edge ascending.
                let asc = |t: usize| {
                    let tri = mesh.triangles()[t];
                    (0..3).any(|c| tri[c] == e.vertices[0] && tri[(c + 1) % 3] == e.vertices[1])
                };
                assert!(asc(e.left) && !asc(e.right));
            }
        }
    }

    #[test]
    fn box_volume() {
        let mesh = bar(4, 2, 3, [2.0, 1.0, 1.5]);
        assert!((signed_volume(&mesh) - 3.0).abs() < 1e-12);
        assert!((mesh.total_area() - 2.0 * (2.0 + 3.0 + 1.5)).abs() < 1e-12);
    }

    #[test]
    fn grid_layout() {
        let mesh = planar_grid(4, 3, 0.5);
        assert_eq!(mesh.num_vertices(), 20);
        assert_eq!(mesh.num_triangles(), 24);
        assert_eq!(mesh.vertices()[2 * 5 + 3], Vector3::new(1.5, 1.0, 0.0));
        assert!(mesh.normals().iter().all(|n| *n == Vector3::z()));
    }

    #[test]
    fn cylinder_sizes() {
        let mesh = capped_cylinder(40, 48, 1.0, 4.0);
        assert_eq!(mesh.num_vertices(), 40 * 49 + 2);
        let big = capped_cylinder(100, 99, 1.0, 4.0);
        assert_eq!(big.num_vertices(), 10_002);
        let (b, t) = cap_centers(40, 48);
        assert_eq!(mesh.vertices()[b], Vector3::zeros());
        assert_eq!(mesh.vertices()[t], Vector3::new(0.0, 0.0, 4.0));
    }

    #[test]
    fn accordion_profile() {
        let mesh = accordion(4, 3, 2, 1.0, 1.0, 60.0);
        assert_eq!(mesh.num_vertices(), 13 * 3);
        let end = mesh.vertices()[12];
        assert!((end.x - 2.0).abs() < 1e-12);
        assert!(end.z.abs() < 1e-12);
        assert!((mesh.vertices()[3].z - 60f64.to_radians().sin()).abs() < 1e-12);
    }

    #[test]
    fn hex_disk_is_deterministic_and_planar() {
        let a = hex_disk(3, 1.0, 0.1);
        let b = hex_disk(3, 1.0, 0.1);
        assert_eq!(a.vertices(), b.vertices());
        assert_eq!(a.num_vertices(), 37);
        assert_eq!(a.num_triangles(), 54);
        assert!(a.normals().iter().all(|n| (n - Vector3::z()).norm() < 1e-12));
    }

    #[test]
    fn scenes_have_valid_handles() {
        for scene in bundled_scenes() {
            let p = crate::guidance::Partition::new(scene.regions.clone(), scene.mesh.num_vertices());
            assert!(p.is_ok(), "{}: {:?}", scene.name, p.err());
            assert_eq!(scene.regions.len(), scene.transforms.len());
        }
    }
}
