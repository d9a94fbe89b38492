use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ncquad::mesh::io as mesh_io;
use ncquad::refelem::{DofMode, Family};
use ncquad::study::{format_table, run_interpolation_study, run_study, verify_reference_elements, MeshKind, StudyConfig};

#[derive(Parser)]
#[command(name = "ncquad", version, about = "Nonconforming quadrilateral elements for the Poisson problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence study and print the error table.
    Run(RunArgs),
    /// Check unisolvency and the edge relations of every reference element.
    Verify,
    /// Write a mesh in the text format.
    Mesh(MeshArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    R,
    Er,
    Rplus,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Standard,
    Tilde,
}

#[derive(Clone, Copy, ValueEnum)]
enum DofModeArg {
    Point,
    Moment,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeshArg {
    Uniform,
    Perturbed,
}

#[derive(Args)]
struct MeshOpts {
    #[arg(long, value_enum, default_value = "uniform")]
    mesh: MeshArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Perturbation of the interior coarse vertex, at most 0.3.
    #[arg(long, default_value_t = 0.2)]
    amplitude: f64,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long, value_enum, default_value = "standard")]
    variant: VariantArg,
    #[arg(long)]
    order: usize,
    #[arg(long, value_enum, default_value = "point")]
    dof_mode: DofModeArg,
    /// Finest refinement level; level L has 2^(L-1) elements per side.
    #[arg(long, default_value_t = 6)]
    levels: usize,
    #[command(flatten)]
    mesh: MeshOpts,
    /// Relative residual tolerance of the linear solver.
    #[arg(long, default_value_t = 1e-13)]
    tol: f64,
    /// Iteration cap of the linear solver; 40 sqrt(N) when unset.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Gauss points per direction for assembly (errors use one more).
    #[arg(long)]
    quad: Option<usize>,
    /// Also write the table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Report zero seconds so repeated runs give identical output.
    #[arg(long)]
    no_timing: bool,
    /// Tabulate the interpolation error instead of solving.
    #[arg(long)]
    interpolate: bool,
}

#[derive(Args)]
struct MeshArgs {
    /// Refinement level.
    #[arg(long, default_value_t = 3)]
    level: usize,
    #[command(flatten)]
    mesh: MeshOpts,
    #[arg(long)]
    output: PathBuf,
}

fn family(f: FamilyArg, v: VariantArg) -> Family {
    match (f, v) {
        (FamilyArg::R, VariantArg::Tilde) => Family::R_TILDE,
        (FamilyArg::R, VariantArg::Standard) => Family::R,
        (FamilyArg::Er, _) => Family::ER,
        (FamilyArg::Rplus, _) => Family::RPLUS,
    }
}

fn config(family_: Family, order: usize, levels: usize, mesh: &MeshOpts) -> StudyConfig {
    let mut c = StudyConfig::new(family_, order, levels);
    c.mesh = match mesh.mesh {
        MeshArg::Uniform => MeshKind::Uniform,
        MeshArg::Perturbed => MeshKind::Perturbed,
    };
    c.seed = mesh.seed;
    c.amplitude = mesh.amplitude;
    c
}

fn run(args: RunArgs) -> Result<(), String> {
    if matches!(args.variant, VariantArg::Tilde) && !matches!(args.family, FamilyArg::R) {
        return Err("--variant tilde applies to the r family only".into());
    }
    let mut c = config(family(args.family, args.variant), args.order, args.levels, &args.mesh);
    c.dof_mode = match args.dof_mode {
        DofModeArg::Point => DofMode::Point,
        DofModeArg::Moment => DofMode::Moment,
    };
    c.solver.tol = args.tol;
    c.solver.max_iter = args.max_iter;
    c.assembly_points = args.quad;
    c.error_points = args.quad.map(|q| q + 1);
    c.record_timing = !args.no_timing;
    let kind = c.kind().map_err(|e| e.to_string())?;
    println!("{kind} on {} mesh", if matches!(c.mesh, MeshKind::Uniform) { "uniform" } else { "perturbed" });

    let (rows, failure) = if args.interpolate {
        (run_interpolation_study(&c).map_err(|e| e.to_string())?, None)
    } else {
        match run_study(&c) {
            Ok(rows) => (rows, None),
            Err(f) => (f.rows, Some(format!("level {}: {}", f.level, f.error))),
        }
    };
    if !rows.is_empty() {
        print!("{}", format_table(&rows).map_err(|e| e.to_string())?);
        if let Some(path) = &args.csv {
            let file = File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
            ncquad::study::write_csv(&rows, file).map_err(|e| e.to_string())?;
        }
    }
    failure.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Verify => {
            let checks = verify_reference_elements();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed == 0 {
                Ok(())
            } else {
                Err(format!("{failed} checks failed"))
            }
        }
        Command::Mesh(args) => config(Family::R, 1, args.level, &args.mesh)
            .mesh_at(args.level)
            .and_then(|m| mesh_io::save(&m, &args.output))
            .map_err(|e| e.to_string()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
