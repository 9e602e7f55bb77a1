use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use harmonica_core::metrics::{self, DEFAULT_BETAS};
use harmonica_core::scenario::Scenario;
use harmonica_core::{fixtures, mesh, Error, HandleSet, Model, OperatorKind, Result};

use crate::chart::{self, Series};
use crate::RunArgs;

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_with(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut out = BufWriter::new(file);
    body(&mut out).and_then(|_| out.flush()).map_err(|e| io_error(path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_with(path, |out| out.write_all(text.as_bytes()))
}

/// A loaded scenario with command-line overrides applied.
struct Job {
    scenario: Scenario,
    model: Model,
    handles: HandleSet,
    out_dir: PathBuf,
}

fn load_scenario(args: &RunArgs) -> Result<(Scenario, PathBuf)> {
    let mut scenario = Scenario::load(&args.scenario)?;
    if let Some(beta) = args.beta {
        scenario.beta = beta;
    }
    if let Some(kind) = args.operator {
        scenario.operator = kind;
    }
    let base = args.scenario.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((scenario, base))
}

fn prepare(args: &RunArgs) -> Result<Job> {
    let (scenario, base) = load_scenario(args)?;
    let model = Model::new(scenario.load_mesh(&base)?)?;
    let resolved = scenario.resolve(model.mesh())?;
    let handles = model.handle_set(resolved.regions, resolved.transforms)?;
    let out_dir = match (&args.out_dir, &scenario.output.dir) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) => base.join(dir),
        (None, None) => PathBuf::from("."),
    };
    std::fs::create_dir_all(&out_dir).map_err(|e| io_error(&out_dir, e))?;
    Ok(Job {
        scenario,
        model,
        handles,
        out_dir,
    })
}

/// Prints the scenario with selectors frozen, overrides applied and an
/// absolute mesh path, so it re-runs identically from anywhere.
fn dump_resolved(args: &RunArgs) -> Result<()> {
    let (scenario, base) = load_scenario(args)?;
    let mesh_path = scenario.mesh_path(&base);
    let mesh = scenario.load_mesh(&base)?;
    let mut frozen = scenario.frozen(&mesh)?;
    frozen.mesh = std::fs::canonicalize(&mesh_path).map_err(|e| io_error(&mesh_path, e))?;
    println!("{}", frozen.to_json());
    Ok(())
}

pub fn deform(args: &RunArgs) -> Result<()> {
    if args.dump_resolved {
        return dump_resolved(args);
    }
    let job = prepare(args)?;
    let Job {
        scenario,
        model,
        handles,
        out_dir,
    } = &job;
    let weights = model.harmonic_weights(handles.partition())?;
    let ctx = model.factorize(handles.partition(), scenario.beta, scenario.operator)?;
    let out = model.deform(&ctx, &weights, handles)?;
    let report = metrics::report(model, &out);
    let triangles = model.mesh().triangles();

    if scenario.output.obj {
        write_with(&out_dir.join("deformed.obj"), |w| mesh::write_obj(w, &out.positions, triangles))?;
    }
    if scenario.output.ply {
        write_with(&out_dir.join("energy.ply"), |w| {
            mesh::write_ply_colored(w, &out.positions, triangles, &report.colormap.colors)
        })?;
    }
    if scenario.output.csv {
        write_text(&out_dir.join("triangles.csv"), &metrics::triangle_csv(model, &report))?;
    }
    println!(
        "beta {} operator {}: {} vertices, {} triangles",
        scenario.beta,
        scenario.operator,
        model.mesh().num_vertices(),
        model.mesh().num_triangles()
    );
    println!("E_P {:e}", out.energies.e_p);
    println!("E_R {:e}", out.energies.e_r);
    println!("E_beta {:e}", out.energies.e_beta);
    println!("max_iso {:e}", report.distortion.max_iso);
    println!("max_conf {:e}", report.distortion.max_conf);
    println!(
        "factorize {:.3} ms, solve {:.3} ms",
        ctx.factorize_time().as_secs_f64() * 1e3,
        out.solve_time.as_secs_f64() * 1e3
    );
    Ok(())
}

pub fn sweep(args: &RunArgs) -> Result<()> {
    if args.dump_resolved {
        return dump_resolved(args);
    }
    let betas = args.betas.clone().unwrap_or_else(|| DEFAULT_BETAS.to_vec());
    metrics::check_betas(&betas)?;
    let job = prepare(args)?;
    let result = metrics::beta_sweep(&job.model, &job.handles, &betas, job.scenario.operator)?;
    write_text(&job.out_dir.join("sweep.csv"), &result.to_csv())?;
    let svg = chart::log_line_chart(
        &format!("maximal errors over β ({} operator)", job.scenario.operator),
        "β",
        &betas,
        &[
            Series {
                label: "max isometric",
                color: "#c0392b",
                values: result.rows.iter().map(|r| r.max_iso).collect(),
            },
            Series {
                label: "max conformal",
                color: "#2957c0",
                values: result.rows.iter().map(|r| r.max_conf).collect(),
            },
        ],
    );
    write_text(&job.out_dir.join("sweep.svg"), &svg)?;
    println!("{:>8} {:>12} {:>12} {:>12} {:>12}", "beta", "max_iso", "max_conf", "E_P", "E_R");
    for r in &result.rows {
        println!("{:>8} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}", r.beta, r.max_iso, r.max_conf, r.e_p, r.e_r);
    }
    Ok(())
}

pub fn compare(args: &RunArgs) -> Result<()> {
    if args.dump_resolved {
        return dump_resolved(args);
    }
    let job = prepare(args)?;
    let Job {
        scenario,
        model,
        handles,
        out_dir,
    } = &job;
    let beta = scenario.beta;
    if beta == 0.0 {
        eprintln!("warning: at β = 0 both operators drop out of the energy; the comparison is vacuous");
    }
    let weights = model.harmonic_weights(handles.partition())?;
    let guidance = model.guidance(&weights, handles)?;
    let mut runs = Vec::new();
    for kind in [OperatorKind::Flat, OperatorKind::Curved] {
        let ctx = model.factorize(handles.partition(), beta, kind)?;
        let out = model.solve_with(&ctx, handles, guidance.clone())?;
        let name = format!("{kind}.obj");
        write_with(&out_dir.join(&name), |w| mesh::write_obj(w, &out.positions, model.mesh().triangles()))?;
        runs.push((kind, out));
    }
    let (flat, curved) = (&runs[0].1, &runs[1].1);
    let mut csv = String::from("vertex,dx,dy,dz,distance\n");
    let mut max_diff: f64 = 0.0;
    for (v, (p, q)) in curved.positions.iter().zip(&flat.positions).enumerate() {
        let d = p - q;
        max_diff = max_diff.max(d.norm());
        csv.push_str(&format!("{v},{},{},{},{}\n", d.x, d.y, d.z, d.norm()));
    }
    write_text(&out_dir.join("operator_diff.csv"), &csv)?;
    println!("beta {beta}");
    println!("max displacement difference {:e} x bbox diagonal", max_diff / model.mesh().bbox_diagonal());
    for (kind, out) in &runs {
        let d = metrics::distortion(model.mesh(), &out.positions);
        println!("{kind}: max_iso {:e} max_conf {:e} E_P {:e}", d.max_iso, d.max_conf, out.energies.e_p);
    }
    Ok(())
}

pub fn fixtures(out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    for scene in fixtures::bundled_scenes() {
        let mesh_file = format!("{}.obj", scene.name);
        write_text(&out_dir.join(&mesh_file), &scene.mesh.to_obj_string())?;
        let scenario = Scenario::from_scene(&scene, &mesh_file);
        write_text(&out_dir.join(format!("{}.json", scene.name)), &scenario.to_json())?;
    }
    Ok(())
}
