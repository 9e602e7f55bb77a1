//! Edge classification into internal and boundary edges with a deterministic
//! left/right triangle assignment.

use std::collections::HashMap;

use crate::mesh::{Mesh, MeshError};

/// An edge shared by exactly two triangles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InternalEdge {
    /// Global edge id (index into the sorted list of all edges).
    pub id: usize,
    /// Shared vertex pair, ascending.
    pub vertices: [usize; 2],
    pub left: usize,
    pub right: usize,
    pub length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub id: usize,
    pub vertices: [usize; 2],
    pub triangle: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeRef {
    Internal(usize),
    Boundary(usize),
}

#[derive(Debug, Clone)]
pub struct EdgeTopology {
    internal: Vec<InternalEdge>,
    boundary: Vec<BoundaryEdge>,
    /// Global edge id to its slot in `internal` or `boundary`.
    lookup: Vec<EdgeRef>,
    num_triangles: usize,
}

/// Incident triangles of an edge, tagged with whether the triangle traverses
/// the edge in ascending vertex order.
type Incidence = HashMap<(usize, usize), Vec<(usize, bool)>>;

fn incidence(triangles: &[[usize; 3]]) -> Incidence {
    let mut map: Incidence = HashMap::with_capacity(triangles.len() * 3 / 2 + 1);
    for (t, tri) in triangles.iter().enumerate() {
        for c in 0..3 {
            let (a, b) = (tri[c], tri[(c + 1) % 3]);
            map.entry((a.min(b), a.max(b))).or_default().push((t, a < b));
        }
    }
    map
}

pub(crate) fn check_manifold(mesh: &Mesh, lines: Option<&[usize]>) -> Result<(), MeshError> {
    let map = incidence(mesh.triangles());
    let worst = map
        .iter()
        .filter(|(_, inc)| inc.len() > 2)
        .map(|(&(a, b), inc)| (inc[2].0, a, b, inc.len()))
        .min();
    match worst {
        Some((triangle, a, b, count)) => Err(MeshError::NonManifoldEdge {
            line: lines.map(|l| l[triangle]),
            triangle,
            a,
            b,
            count,
        }),
        None => Ok(()),
    }
}

impl EdgeTopology {
    /// Classifies every edge. The left triangle of an internal edge is the
    /// one that traverses it in ascending vertex order; if both or neither
    /// do (inconsistent orientation), the lower triangle index is left.
    pub fn build(mesh: &Mesh) -> Result<Self, MeshError> {
        let map = incidence(mesh.triangles());
        let mut keys: Vec<(usize, usize)> = map.keys().copied().collect();
        keys.sort_unstable();

        let mut internal = Vec::new();
        let mut boundary = Vec::new();
        let mut lookup = Vec::with_capacity(keys.len());
        for (id, &(a, b)) in keys.iter().enumerate() {
            let inc = &map[&(a, b)];
            match inc.as_slice() {
                [(t, _)] => {
                    lookup.push(EdgeRef::Boundary(boundary.len()));
                    boundary.push(BoundaryEdge {
                        id,
                        vertices: [a, b],
                        triangle: *t,
                    });
                }
                [(t0, asc0), (t1, asc1)] => {
                    let (left, right) = match (asc0, asc1) {
                        (true, false) => (*t0, *t1),
                        (false, true) => (*t1, *t0),
                        _ => (*t0.min(t1), *t0.max(t1)),
                    };
                    lookup.push(EdgeRef::Internal(internal.len()));
                    internal.push(InternalEdge {
                        id,
                        vertices: [a, b],
                        left,
                        right,
                        length: (mesh.vertices()[b] - mesh.vertices()[a]).norm(),
                    });
                }
                _ => {
                    return Err(MeshError::NonManifoldEdge {
                        line: None,
                        triangle: inc[2].0,
                        a,
                        b,
                        count: inc.len(),
                    })
                }
            }
        }
        Ok(EdgeTopology {
            internal,
            boundary,
            lookup,
            num_triangles: mesh.num_triangles(),
        })
    }

    pub fn internal_edges(&self) -> &[InternalEdge] {
        &self.internal
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn num_edges(&self) -> usize {
        self.lookup.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.num_triangles
    }

    pub fn edge(&self, id: usize) -> Option<EdgeRef> {
        self.lookup.get(id).copied()
    }

    pub fn is_closed(&self) -> bool {
        self.boundary.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn triangle_pair() {
        let mesh = Mesh::parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3\nf 1 3 4\n").unwrap();
        let topo = EdgeTopology::build(&mesh).unwrap();
        assert_eq!(topo.internal_edges().len(), 1);
        assert_eq!(topo.boundary_edges().len(), 4);
        let e = topo.internal_edges()[0];
        assert_eq!(e.vertices, [0, 2]);
        // Triangle 1 = (0, 2, 3) traverses 0 -> 2.
        assert_eq!((e.left, e.right), (1, 0));
        assert!((e.length - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn tetrahedron_is_closed() {
        let mesh = fixtures::tetrahedron();
        let topo = EdgeTopology::build(&mesh).unwrap();
        assert_eq!(topo.internal_edges().len(), 6);
        assert!(topo.is_closed());
        assert_eq!(topo.num_edges(), 3 * mesh.num_triangles() / 2);
        for e in topo.internal_edges() {
            assert_ne!(e.left, e.right);
            assert!(e.length > 0.0);
        }
    }

    #[test]
    fn inconsistent_orientation_tie_breaks_on_index() {
        // Both triangles traverse (0,1) ascending.
        let mesh = Mesh::parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 -1 0\nf 1 2 3\nf 1 2 4\n").unwrap();
        let topo = EdgeTopology::build(&mesh).unwrap();
        let e = topo.internal_edges()[0];
        assert_eq!((e.left, e.right), (0, 1));
    }

    #[test]
    fn three_triangles_on_one_edge() {
        let v = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 -1 0\nv 0 0 1\n";
        let err = Mesh::parse_obj(&format!("{v}f 1 2 3\nf 2 1 4\nf 1 2 5\n")).unwrap_err();
        assert!(matches!(err, MeshError::NonManifoldEdge { a: 0, b: 1, .. }));
    }

    #[test]
    fn edge_counts_add_up() {
        for mesh in [fixtures::planar_grid(5, 4, 1.0), fixtures::capped_cylinder(12, 6, 1.0, 3.0)] {
            let topo = EdgeTopology::build(&mesh).unwrap();
            assert_eq!(
                topo.internal_edges().len() + topo.boundary_edges().len(),
                topo.num_edges()
            );
            let mut seen = std::collections::HashSet::new();
            for e in topo.internal_edges() {
                assert!(seen.insert(e.id));
                assert_eq!(topo.edge(e.id), Some(EdgeRef::Internal(seen.len() - 1)));
            }
        }
    }
}
