use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cones::driver::{self, BoundaryMode, Config};
use cones::mesh;

#[derive(Parser)]
#[command(name = "cones", about = "Integer-constrained cone singularities for low-distortion conformal parameterization", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute cone positions, angles, and (for g ≥ 1) holonomy integers.
    Solve(SolveArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Input mesh (ASCII OBJ, triangles only)
    input: PathBuf,
    /// Target Hencky distortion ε_tar
    #[arg(long, default_value_t = 0.200)]
    target_distortion: f64,
    /// Active-set size for the angle solves
    #[arg(long, default_value_t = 30)]
    ng: usize,
    /// Integer multiplier bounds (low high)
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [-1, 1], allow_negative_numbers = true)]
    bound: Vec<i64>,
    /// Seam-jump penalty weight (g ≥ 1)
    #[arg(long, default_value_t = 1e6)]
    lambda_d: f64,
    /// Initial relative distortion-increase budget for cone removal
    #[arg(long, default_value_t = 0.10)]
    eta: f64,
    /// Iteration cap
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    /// Boundary condition for meshes with boundary
    #[arg(long, value_enum, default_value_t = BoundaryArg::Dirichlet)]
    boundary: BoundaryArg,
    /// Write the JSON report here
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the conformal factors as an ASCII PLY (per-vertex "quality")
    #[arg(long)]
    field: Option<PathBuf>,
    /// Write the distortion trace as CSV
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Disable the rayon-parallel multi-column solves
    #[arg(long)]
    sequential: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundaryArg {
    Dirichlet,
    Neumann,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Solve(args) = cli.command;
    match run(&args) {
        Ok(reached) => {
            if reached {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(args: &SolveArgs) -> cones::Result<bool> {
    let config = Config {
        epsilon_tar: args.target_distortion,
        n_g: args.ng,
        n_b: (args.bound[0], args.bound[1]),
        lambda_d: args.lambda_d,
        eta0: args.eta,
        max_iter: args.max_iter,
        boundary: match args.boundary {
            BoundaryArg::Dirichlet => BoundaryMode::Dirichlet,
            BoundaryArg::Neumann => BoundaryMode::Neumann,
        },
        parallel: !args.sequential,
        ..Config::default()
    };

    let mesh = mesh::load_obj(&args.input)?;
    let report = driver::run_pipeline(mesh, &config)?;

    println!(
        "{}: E = {:.6} after {} iterations, {} cones ({} zero-angle), Σz = {}{}",
        report.termination,
        report.distortion,
        report.iterations,
        report.n_c + report.n_0,
        report.n_0,
        report.cones.iter().map(|&(_, z)| z).sum::<i64>(),
        report
            .holonomy
            .as_ref()
            .map(|h| format!(", r = {:?}, E_dif = {:.3e}", h.r, h.e_dif))
            .unwrap_or_default(),
    );
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }

    if let Some(path) = &args.out {
        driver::emit_report(&report, path)?;
    }
    if let Some(path) = &args.field {
        // u is reported on the original vertices; reload the mesh for the
        // positions (the pipeline consumed it).
        let mesh = mesh::load_obj(&args.input)?;
        driver::emit_field_ply(&mesh, &report.u[..mesh.n_vertices()], path)?;
    }
    if let Some(path) = &args.trace {
        driver::emit_trace_csv(&report, path)?;
    }
    Ok(report.reached_target())
}
