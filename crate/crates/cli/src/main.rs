//! `harmonica`: batch deformation, β sweeps and operator comparison from
//! JSON scenario files.

mod chart;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use harmonica_core::{Error, OperatorKind};

#[derive(Debug, Parser)]
#[command(name = "harmonica", version, about = "Harmonic gradient-domain surface deformation")]
struct Cli {
    /// Worker threads for parallel loops (defaults to the number of cores).
    #[arg(long, env = "HARMONICA_THREADS", global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Deform the mesh once and write the mesh, energy colormap and metrics.
    Deform(RunArgs),
    /// Solve over a list of β values and write a CSV table and an SVG chart.
    Sweep(RunArgs),
    /// Solve with the flat and the curved operator at the same β.
    Compare(RunArgs),
    /// Write the bundled procedural meshes and their scenarios.
    Fixtures {
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Overrides the scenario's β.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Comma-separated β list for `sweep`.
    #[arg(long, value_delimiter = ',')]
    pub betas: Option<Vec<f64>>,
    /// Overrides the scenario's operator.
    #[arg(long)]
    pub operator: Option<OperatorKind>,
    /// Overrides the scenario's output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Print the scenario with sphere selectors frozen to vertex lists and exit.
    #[arg(long)]
    pub dump_resolved: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Deform(args) => commands::deform(&args),
        Command::Sweep(args) => commands::sweep(&args),
        Command::Compare(args) => commands::compare(&args),
        Command::Fixtures { out_dir } => commands::fixtures(&out_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Scenario(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
