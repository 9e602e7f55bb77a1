//! JSON scenario documents: mesh path, handle selections and transforms,
//! β, operator kind and output options.
//!
//! ```json
//! {
//!   "version": 1,
//!   "mesh": "cylinder.obj",
//!   "handles": [
//!     { "name": "base", "vertices": [0, 1, 2] },
//!     { "name": "tip", "sphere": { "center": [0, 0, 4], "radius": 0.2 },
//!       "transform": { "rotation": [0.7071, 0, 0, 0.7071], "translation": [0, 0, 0.5] } }
//!   ],
//!   "beta": 0.2,
//!   "operator": "curved"
//! }
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixtures::{select_sphere, Scene};
use crate::guidance::{HandleRegion, Transform};
use crate::mesh::Mesh;
use crate::operators::OperatorKind;

pub const SCENARIO_VERSION: u32 = 1;

fn default_beta() -> f64 {
    0.2
}

fn default_true() -> bool {
    true
}

fn identity_rotation() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

fn unit_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    /// Relative paths are resolved against the scenario file's directory.
    pub mesh: PathBuf,
    pub handles: Vec<HandleSpec>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub operator: OperatorKind,
    #[serde(default)]
    pub output: OutputOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandleSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vertices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sphere: Option<SphereSelector>,
    #[serde(default)]
    pub transform: TransformSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereSelector {
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSpec {
    /// Unit quaternion `(w, x, y, z)`.
    #[serde(default = "identity_rotation")]
    pub rotation: [f64; 4],
    #[serde(default)]
    pub translation: [f64; 3],
    #[serde(default = "unit_scale")]
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pivot: Option<[f64; 3]>,
}

impl Default for TransformSpec {
    fn default() -> Self {
        TransformSpec {
            rotation: identity_rotation(),
            translation: [0.0; 3],
            scale: 1.0,
            pivot: None,
        }
    }
}

impl TransformSpec {
    pub fn to_transform(&self) -> Result<Transform> {
        Transform::new(
            self.rotation,
            Vector3::from(self.translation),
            self.scale,
            self.pivot.map(Vector3::from),
        )
    }

    pub fn from_transform(t: &Transform) -> Self {
        let q = t.rotation.quaternion();
        TransformSpec {
            rotation: [q.w, q.i, q.j, q.k],
            translation: t.translation.into(),
            scale: t.scale,
            pivot: t.pivot.map(Into::into),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputOptions {
    /// Output directory; relative paths are resolved like the mesh path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub obj: bool,
    #[serde(default = "default_true")]
    pub ply: bool,
    #[serde(default = "default_true")]
    pub csv: bool,
}

impl Default for OutputOptions {
    fn default() -> Self {
        OutputOptions {
            dir: None,
            obj: true,
            ply: true,
            csv: true,
        }
    }
}

/// Handle regions and transforms ready for the pipeline.
#[derive(Debug, Clone)]
pub struct ResolvedHandles {
    pub regions: Vec<HandleRegion>,
    pub transforms: Vec<Transform>,
}

impl Scenario {
    /// Parses and validates the document structure. Any failure is a
    /// [`Error::Scenario`].
    pub fn parse(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        if scenario.version != SCENARIO_VERSION {
            return Err(Error::Scenario(format!(
                "unsupported scenario version {} (expected {SCENARIO_VERSION})",
                scenario.version
            )));
        }
        if scenario.handles.is_empty() {
            return Err(Error::Scenario("scenario defines no handles".into()));
        }
        let mut names = HashSet::new();
        for h in &scenario.handles {
            if !names.insert(h.name.as_str()) {
                return Err(Error::Scenario(format!("duplicate handle name {:?}", h.name)));
            }
            if h.vertices.is_empty() && h.sphere.is_none() {
                return Err(Error::Scenario(format!("handle {:?} selects no vertices", h.name)));
            }
            if let Some(s) = h.sphere {
                if !(s.radius >= 0.0 && s.radius.is_finite()) {
                    return Err(Error::Scenario(format!("handle {:?} has invalid sphere radius {}", h.name, s.radius)));
                }
            }
        }
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Mesh path relative to `base_dir` unless absolute.
    pub fn mesh_path(&self, base_dir: &Path) -> PathBuf {
        base_dir.join(&self.mesh)
    }

    pub fn load_mesh(&self, base_dir: &Path) -> Result<Mesh> {
        let path = self.mesh_path(base_dir);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Mesh::parse_obj(&text)?)
    }

    /// Resolves sphere selectors against the rest vertices. Explicit
    /// vertices keep their order; sphere hits not already listed follow in
    /// ascending order.
    pub fn resolve(&self, mesh: &Mesh) -> Result<ResolvedHandles> {
        let mut regions = Vec::with_capacity(self.handles.len());
        let mut transforms = Vec::with_capacity(self.handles.len());
        for h in &self.handles {
            let mut vertices = h.vertices.clone();
            if let Some(s) = h.sphere {
                let hits = select_sphere(mesh, Vector3::from(s.center), s.radius);
                if hits.is_empty() {
                    return Err(Error::Scenario(format!(
                        "sphere selector of handle {:?} (center {:?}, radius {}) captures no vertex",
                        h.name, s.center, s.radius
                    )));
                }
                let listed: HashSet<usize> = vertices.iter().copied().collect();
                vertices.extend(hits.into_iter().filter(|v| !listed.contains(v)));
            }
            regions.push(HandleRegion::new(h.name.clone(), vertices));
            transforms.push(h.transform.to_transform()?);
        }
        Ok(ResolvedHandles { regions, transforms })
    }

    /// Copy with sphere selectors replaced by explicit vertex lists and
    /// every pivot filled in; re-running it reproduces the original results.
    pub fn frozen(&self, mesh: &Mesh) -> Result<Scenario> {
        let resolved = self.resolve(mesh)?;
        let handles = crate::guidance::HandleSet::new(
            mesh,
            crate::guidance::Partition::new(resolved.regions.clone(), mesh.num_vertices())?,
            resolved.transforms,
        )?;
        let mut out = self.clone();
        for ((spec, region), pivot) in out.handles.iter_mut().zip(&resolved.regions).zip(handles.pivots()) {
            spec.vertices = region.vertices.clone();
            spec.sphere = None;
            spec.transform.pivot = Some((*pivot).into());
        }
        Ok(out)
    }

    /// Scenario for a bundled scene whose mesh is stored at `mesh_file`.
    pub fn from_scene(scene: &Scene, mesh_file: impl Into<PathBuf>) -> Self {
        Scenario {
            version: SCENARIO_VERSION,
            mesh: mesh_file.into(),
            handles: scene
                .regions
                .iter()
                .zip(&scene.transforms)
                .map(|(r, t)| HandleSpec {
                    name: r.name.clone(),
                    vertices: r.vertices.clone(),
                    sphere: None,
                    transform: TransformSpec::from_transform(t),
                })
                .collect(),
            beta: scene.beta,
            operator: scene.operator,
            output: OutputOptions::default(),
        }
    }
}
