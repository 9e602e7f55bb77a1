//! Indexed triangle meshes: OBJ/PLY I/O, validation and per-triangle geometry.

use std::io::{self, Write};

use nalgebra::Vector3;
use thiserror::Error;

use crate::topology;

/// Relative area threshold: triangles with `A_t <= 1e-12 * bbox_diag²` are rejected.
pub const DEGENERATE_AREA_FACTOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("line {line}: malformed vertex: {reason}")]
    MalformedVertex { line: usize, reason: String },

    #[error("line {line}: malformed face: {reason}")]
    MalformedFace { line: usize, reason: String },

    #[error("{}: vertex index {index} out of range ({count} vertices)", at(*line, *triangle))]
    IndexOutOfRange {
        line: Option<usize>,
        triangle: usize,
        index: i64,
        count: usize,
    },

    #[error("{}: degenerate triangle (area {area:e} <= {threshold:e})", at(*line, *triangle))]
    DegenerateTriangle {
        line: Option<usize>,
        triangle: usize,
        area: f64,
        threshold: f64,
    },

    #[error(
        "{}: non-manifold edge ({a}, {b}) shared by {count} triangles",
        at(*line, *triangle)
    )]
    NonManifoldEdge {
        line: Option<usize>,
        triangle: usize,
        a: usize,
        b: usize,
        count: usize,
    },

    #[error("mesh has no triangles")]
    Empty,
}

fn at(line: Option<usize>, triangle: usize) -> String {
    match line {
        Some(line) => format!("line {line} (triangle {triangle})"),
        None => format!("triangle {triangle}"),
    }
}

impl MeshError {
    /// Stable machine-readable code for each failure class.
    pub fn code(&self) -> &'static str {
        match self {
            MeshError::MalformedVertex { .. } => "malformed-vertex",
            MeshError::MalformedFace { .. } => "malformed-face",
            MeshError::IndexOutOfRange { .. } => "index-out-of-range",
            MeshError::DegenerateTriangle { .. } => "degenerate-triangle",
            MeshError::NonManifoldEdge { .. } => "non-manifold-edge",
            MeshError::Empty => "empty-mesh",
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            MeshError::MalformedVertex { line, .. } | MeshError::MalformedFace { line, .. } => {
                Some(*line)
            }
            MeshError::IndexOutOfRange { line, .. }
            | MeshError::DegenerateTriangle { line, .. }
            | MeshError::NonManifoldEdge { line, .. } => *line,
            MeshError::Empty => None,
        }
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vector3<f64>>) -> Self {
        let mut min = Vector3::repeat(f64::INFINITY);
        let mut max = Vector3::repeat(f64::NEG_INFINITY);
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        Aabb { min, max }
    }

    pub fn diagonal(&self) -> f64 {
        if self.min.x > self.max.x {
            return 0.0;
        }
        (self.max - self.min).norm()
    }
}

/// Immutable, validated triangle mesh with cached areas and unit normals.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[usize; 3]>,
    areas: Vec<f64>,
    normals: Vec<Vector3<f64>>,
}

impl Mesh {
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let mesh = Self::build(vertices, triangles, None)?;
        topology::check_manifold(&mesh, None)?;
        Ok(mesh)
    }

    fn build(
        vertices: Vec<Vector3<f64>>,
        triangles: Vec<[usize; 3]>,
        lines: Option<&[usize]>,
    ) -> Result<Self, MeshError> {
        if triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        let line_of = |t: usize| lines.map(|l| l[t]);
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= vertices.len()) {
                return Err(MeshError::IndexOutOfRange {
                    line: line_of(t),
                    triangle: t,
                    index: bad as i64 + 1,
                    count: vertices.len(),
                });
            }
        }
        let diag = Aabb::from_points(&vertices).diagonal();
        let threshold = DEGENERATE_AREA_FACTOR * diag * diag;
        let mut areas = Vec::with_capacity(triangles.len());
        let mut normals = Vec::with_capacity(triangles.len());
        for (t, &[i, j, k]) in triangles.iter().enumerate() {
            let cross = (vertices[j] - vertices[i]).cross(&(vertices[k] - vertices[i]));
            let area = 0.5 * cross.norm();
            if !(area > threshold) {
                return Err(MeshError::DegenerateTriangle {
                    line: line_of(t),
                    triangle: t,
                    area,
                    threshold,
                });
            }
            areas.push(area);
            normals.push(cross / (2.0 * area));
        }
        Ok(Mesh {
            vertices,
            triangles,
            areas,
            normals,
        })
    }

    /// Parses ASCII OBJ text. Polygons are fan-triangulated from their first
    /// corner; texture coordinates, normals and materials are ignored.
    pub fn parse_obj(text: &str) -> Result<Self, MeshError> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let mut lines = Vec::new();
        // Raw (possibly forward-referencing) face indices, resolved once all vertices are known.
        let mut pending: Vec<([i64; 3], usize)> = Vec::new();

        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            let mut tokens = content.split_whitespace();
            match tokens.next() {
                Some("v") => {
                    let coords: Vec<&str> = tokens.collect();
                    if coords.len() < 3 {
                        return Err(MeshError::MalformedVertex {
                            line,
                            reason: format!("expected 3 coordinates, found {}", coords.len()),
                        });
                    }
                    let mut p = [0.0; 3];
                    for (slot, tok) in p.iter_mut().zip(&coords) {
                        *slot = tok.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                            MeshError::MalformedVertex {
                                line,
                                reason: format!("invalid coordinate {tok:?}"),
                            }
                        })?;
                    }
                    vertices.push(Vector3::from(p));
                }
                Some("f") => {
                    let mut corners = Vec::new();
                    for tok in tokens {
                        let head = tok.split('/').next().unwrap_or("");
                        let idx: i64 = head.parse().map_err(|_| MeshError::MalformedFace {
                            line,
                            reason: format!("invalid vertex reference {tok:?}"),
                        })?;
                        let resolved = match idx {
                            0 => {
                                return Err(MeshError::MalformedFace {
                                    line,
                                    reason: "vertex index 0 is invalid in OBJ".into(),
                                })
                            }
                            i if i > 0 => i - 1,
                            i => vertices.len() as i64 + i,
                        };
                        if resolved < 0 {
                            return Err(MeshError::IndexOutOfRange {
                                line: Some(line),
                                triangle: triangles.len() + pending.len(),
                                index: idx,
                                count: vertices.len(),
                            });
                        }
                        corners.push(resolved);
                    }
                    if corners.len() < 3 {
                        return Err(MeshError::MalformedFace {
                            line,
                            reason: format!("face needs at least 3 vertices, found {}", corners.len()),
                        });
                    }
                    for w in 1..corners.len() - 1 {
                        pending.push(([corners[0], corners[w], corners[w + 1]], line));
                    }
                }
                _ => {}
            }
        }

        for (t, (tri, line)) in pending.into_iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i as usize >= vertices.len()) {
                return Err(MeshError::IndexOutOfRange {
                    line: Some(line),
                    triangle: t,
                    index: bad + 1,
                    count: vertices.len(),
                });
            }
            triangles.push([tri[0] as usize, tri[1] as usize, tri[2] as usize]);
            lines.push(line);
        }

        let mesh = Self::build(vertices, triangles, Some(&lines))?;
        topology::check_manifold(&mesh, Some(&lines))?;
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn normal(&self, t: usize) -> Vector3<f64> {
        self.normals[t]
    }

    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        self.bbox().diagonal()
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Label of the connected component of every vertex (isolated vertices
    /// form their own component). Labels are numbered by lowest vertex index.
    pub fn components(&self) -> Vec<usize> {
        let n = self.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &[i, j, k] in &self.triangles {
            for (a, b) in [(i, j), (j, k)] {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        let mut out = vec![0; n];
        for v in 0..n {
            let root = find(&mut parent, v);
            if label[root] == usize::MAX {
                label[root] = next;
                next += 1;
            }
            out[v] = label[root];
        }
        out
    }

    pub fn write_obj<W: Write>(&self, out: W) -> io::Result<()> {
        write_obj(out, &self.vertices, &self.triangles)
    }

    pub fn to_obj_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_obj(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("OBJ output is ASCII")
    }
}

/// Writes vertices and faces as OBJ. Coordinates use the shortest decimal
/// form that parses back to the same `f64`.
pub fn write_obj<W: Write>(mut out: W, vertices: &[Vector3<f64>], triangles: &[[usize; 3]]) -> io::Result<()> {
    for v in vertices {
        writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z)?;
    }
    for t in triangles {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    out.flush()
}

/// Writes a binary little-endian PLY with one flat color per triangle.
/// Vertices are duplicated per corner so each triangle carries its own color.
pub fn write_ply_colored<W: Write>(
    mut out: W,
    vertices: &[Vector3<f64>],
    triangles: &[[usize; 3]],
    colors: &[[u8; 3]],
) -> io::Result<()> {
    assert_eq!(colors.len(), triangles.len(), "one color per triangle");
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\n\
         element vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         element face {}\n\
         property list uchar int vertex_indices\n\
         end_header\n",
        3 * triangles.len(),
        triangles.len()
    )?;
    for (tri, rgb) in triangles.iter().zip(colors) {
        for &v in tri {
            let p = vertices[v];
            for c in [p.x, p.y, p.z] {
                out.write_all(&(c as f32).to_le_bytes())?;
            }
            out.write_all(rgb)?;
        }
    }
    for t in 0..triangles.len() as i32 {
        out.write_all(&[3u8])?;
        for c in 0..3 {
            out.write_all(&(3 * t + c).to_le_bytes())?;
        }
    }
    out.flush()
}
