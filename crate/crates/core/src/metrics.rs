//! Per-triangle energies, distortion measures, colormaps and β sweeps.

use std::fmt::Write as _;

use nalgebra::{Matrix2, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::guidance::{GuidanceField, HandleSet};
use crate::mesh::Mesh;
use crate::operators::{check_beta, OperatorKind};
use crate::pipeline::{Deformation, Model};
use crate::sparse::SparseOperator;

/// Default sweep grid, denser at small β.
pub const DEFAULT_BETAS: [f64; 9] = [0.0, 0.003, 0.01, 0.03, 0.1, 0.2, 0.4, 0.7, 0.9];

pub const SWEEP_CSV_HEADER: &str = "beta,max_iso,max_conf,e_p,e_r,e_total,factorize_ms,solve_ms";

pub const RAMP_MIN: [u8; 3] = [0, 0, 255];
pub const RAMP_MAX: [u8; 3] = [255, 0, 0];

/// One scalar per triangle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriangleField {
    pub values: Vec<f64>,
}

impl TriangleField {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// `‖(G X - Z)_t‖²_F` per triangle.
pub fn local_energy(gradient: &SparseOperator, positions: &[Vector3<f64>], guidance: &GuidanceField) -> TriangleField {
    let gx = GuidanceField::gradients_of(gradient, positions);
    TriangleField {
        values: gx.blocks.iter().zip(&guidance.blocks).map(|(a, b)| (a - b).norm_squared()).collect(),
    }
}

/// Orthonormal basis `(e1, e2)` of the plane spanned by `u, v`, with `e1`
/// along `u`. Degenerate inputs fall back to arbitrary completions.
fn plane_frame(u: Vector3<f64>, v: Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let e1 = u
        .try_normalize(0.0)
        .or_else(|| v.try_normalize(0.0))
        .unwrap_or_else(Vector3::x);
    let e2 = (v - e1 * v.dot(&e1))
        .try_normalize(1e-300)
        .unwrap_or_else(|| {
            let helper = if e1.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
            e1.cross(&helper).normalize()
        });
    (e1, e2)
}

/// Singular values of a 2x2 matrix, descending.
pub fn singular_values_2x2(m: &Matrix2<f64>) -> [f64; 2] {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let s = (a + d).hypot(c - b);
    let t = (a - d).hypot(b + c);
    [(s + t) / 2.0, ((s - t) / 2.0).abs()]
}

/// In-plane deformation gradient mapping rest edge vectors to deformed edge
/// vectors, each expressed in an orthonormal frame of its triangle plane
/// whose first axis follows edge `i -> j`. Returns `J` and its singular
/// values; a collapsed deformed triangle yields `σ2 = 0`.
pub fn deformation_gradient_2x2(rest: [Vector3<f64>; 3], deformed: [Vector3<f64>; 3]) -> (Matrix2<f64>, [f64; 2]) {
    let (r1, r2) = (rest[1] - rest[0], rest[2] - rest[0]);
    let (d1, d2) = (deformed[1] - deformed[0], deformed[2] - deformed[0]);
    let (f1, f2) = plane_frame(r1, r2);
    let (g1, g2) = plane_frame(d1, d2);
    let rest_coords = Matrix2::new(r1.dot(&f1), r2.dot(&f1), r1.dot(&f2), r2.dot(&f2));
    let deformed_coords = Matrix2::new(d1.dot(&g1), d2.dot(&g1), d1.dot(&g2), d2.dot(&g2));
    let inv = rest_coords.try_inverse().unwrap_or_else(Matrix2::zeros);
    let j = deformed_coords * inv;
    (j, singular_values_2x2(&j))
}

/// `(σ1 - 1)² + (σ2 - 1)²`.
pub fn isometric_error(sigma: [f64; 2]) -> f64 {
    (sigma[0] - 1.0).powi(2) + (sigma[1] - 1.0).powi(2)
}

/// `½ (σ1 - σ2)²`.
pub fn conformal_error(sigma: [f64; 2]) -> f64 {
    0.5 * (sigma[0] - sigma[1]).powi(2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distortion {
    pub sigma: Vec<[f64; 2]>,
    pub iso: TriangleField,
    pub conf: TriangleField,
    pub max_iso: f64,
    pub max_conf: f64,
    /// Area-weighted means; informational only.
    pub mean_iso: f64,
    pub mean_conf: f64,
}

/// Isometric and conformal errors from per-triangle singular values.
/// `areas` weights the means.
pub fn iso_conf_errors(sigma: Vec<[f64; 2]>, areas: &[f64]) -> Distortion {
    let iso = TriangleField {
        values: sigma.iter().map(|s| isometric_error(*s)).collect(),
    };
    let conf = TriangleField {
        values: sigma.iter().map(|s| conformal_error(*s)).collect(),
    };
    let total: f64 = areas.iter().sum();
    let mean = |f: &TriangleField| {
        if total > 0.0 {
            f.values.iter().zip(areas).map(|(v, a)| v * a).sum::<f64>() / total
        } else {
            0.0
        }
    };
    Distortion {
        max_iso: iso.max(),
        max_conf: conf.max(),
        mean_iso: mean(&iso),
        mean_conf: mean(&conf),
        sigma,
        iso,
        conf,
    }
}

/// Distortion of `positions` relative to the rest mesh.
pub fn distortion(rest: &Mesh, positions: &[Vector3<f64>]) -> Distortion {
    let sigma = rest
        .triangles()
        .par_iter()
        .map(|tri| {
            let r = tri.map(|v| rest.vertices()[v]);
            let d = tri.map(|v| positions[v]);
            deformation_gradient_2x2(r, d).1
        })
        .collect();
    iso_conf_errors(sigma, rest.areas())
}

/// Nearest-rank percentile: the element at ascending index `⌈p·n⌉ - 1`.
pub fn percentile_nearest_rank(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Colormap {
    pub p95: f64,
    pub colors: Vec<[u8; 3]>,
}

/// Position on the color ramp: `value / p95` clamped to `[0, 1]`.
pub fn ramp_parameter(value: f64, p95: f64) -> f64 {
    if p95 > 0.0 {
        (value / p95).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

pub fn ramp_color(s: f64) -> [u8; 3] {
    let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * s).round() as u8;
    [mix(RAMP_MIN[0], RAMP_MAX[0]), mix(RAMP_MIN[1], RAMP_MAX[1]), mix(RAMP_MIN[2], RAMP_MAX[2])]
}

/// Linear blue-to-red ramp over `[0, p95]`, values above clamped.
pub fn colormap(field: &TriangleField) -> Colormap {
    let p95 = percentile_nearest_rank(&field.values, 0.95);
    Colormap {
        p95,
        colors: field.values.iter().map(|&v| ramp_color(ramp_parameter(v, p95))).collect(),
    }
}

/// Everything reported for one deformation.
#[derive(Debug, Clone, Serialize)]
pub struct DeformationReport {
    pub energy: TriangleField,
    pub distortion: Distortion,
    pub colormap: Colormap,
}

pub fn report(model: &Model, deformation: &Deformation) -> DeformationReport {
    let energy = local_energy(model.gradient(), &deformation.positions, &deformation.guidance);
    let colormap = colormap(&energy);
    DeformationReport {
        distortion: distortion(model.mesh(), &deformation.positions),
        energy,
        colormap,
    }
}

/// Per-triangle CSV: `triangle,area,energy,sigma1,sigma2,iso,conf`.
pub fn triangle_csv(model: &Model, report: &DeformationReport) -> String {
    let mut out = String::from("triangle,area,energy,sigma1,sigma2,iso,conf\n");
    for t in 0..model.mesh().num_triangles() {
        let s = report.distortion.sigma[t];
        let _ = writeln!(
            out,
            "{t},{},{},{},{},{},{}",
            model.mesh().area(t),
            report.energy.values[t],
            s[0],
            s[1],
            report.distortion.iso.values[t],
            report.distortion.conf.values[t]
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub max_iso: f64,
    pub max_conf: f64,
    pub e_p: f64,
    pub e_r: f64,
    pub e_total: f64,
    pub factorize_ms: f64,
    pub solve_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{SWEEP_CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.3},{:.3}",
                r.beta, r.max_iso, r.max_conf, r.e_p, r.e_r, r.e_total, r.factorize_ms, r.solve_ms
            );
        }
        out
    }
}

/// Every β in `[0, 1)` and strictly increasing.
pub fn check_betas(betas: &[f64]) -> Result<()> {
    if betas.is_empty() {
        return Err(Error::Scenario("empty β list".into()));
    }
    for &b in betas {
        check_beta(b)?;
    }
    if let Some(w) = betas.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::Scenario(format!("β list must be strictly increasing ({} then {})", w[0], w[1])));
    }
    Ok(())
}

/// Factorizes and solves at every β, reusing one set of harmonic weights.
pub fn beta_sweep(model: &Model, handles: &HandleSet, betas: &[f64], kind: OperatorKind) -> Result<SweepResult> {
    check_betas(betas)?;
    let weights = model.harmonic_weights(handles.partition())?;
    let guidance = model.guidance(&weights, handles)?;
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let ctx = model.factorize(handles.partition(), beta, kind)?;
        let deformation = model.solve_with(&ctx, handles, guidance.clone())?;
        let distortion = distortion(model.mesh(), &deformation.positions);
        rows.push(SweepRow {
            beta,
            max_iso: distortion.max_iso,
            max_conf: distortion.max_conf,
            e_p: deformation.energies.e_p,
            e_r: deformation.energies.e_r,
            e_total: deformation.energies.e_beta,
            factorize_ms: ctx.factorize_time().as_secs_f64() * 1e3,
            solve_ms: deformation.solve_time.as_secs_f64() * 1e3,
        });
    }
    Ok(SweepResult { rows })
}
