use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qtdg_core::experiments::{self, ExperimentError, Generator, RunConfig};

#[derive(Parser)]
#[command(name = "qtdg", version, about = "Quasi-Trefftz DG experiments for diffusion-advection-reaction problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    config: PathBuf,
    /// Override a configuration key, e.g. `--set mesh.n=8`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output file; replaces `outputs.csv`. Use `-` for stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeshKind {
    UnitSquare,
    Lshape,
}

#[derive(Subcommand)]
enum Command {
    /// Error norms and rates under mesh refinement.
    Convergence(RunArgs),
    /// Condition number estimates under mesh refinement.
    Cond(RunArgs),
    /// Solves on every level; writes a summary and optionally a field dump.
    Solve(RunArgs),
    /// Dimension table, basis residuals and coefficient dumps.
    Basis(RunArgs),
    /// Writes a generated mesh in the text mesh format.
    Mesh {
        #[arg(value_enum)]
        generator: MeshKind,
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(text: &str, target: Option<&Path>) -> Result<(), ExperimentError> {
    match target {
        Some(p) if p != Path::new("-") => {
            std::fs::write(p, text).map_err(|e| ExperimentError::Io(format!("{}: {e}", p.display())))
        }
        _ => {
            print!("{text}");
            Ok(())
        }
    }
}

fn target(args: &RunArgs, cfg: &RunConfig) -> Option<PathBuf> {
    args.out.clone().or_else(|| cfg.outputs.csv.as_ref().map(PathBuf::from))
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Convergence(a) => {
            let cfg = RunConfig::from_file(&a.config, &a.overrides)?;
            let rows = experiments::convergence(&cfg)?;
            emit(&experiments::to_csv(&cfg, &rows)?, target(&a, &cfg).as_deref())
        }
        Command::Cond(a) => {
            let cfg = RunConfig::from_file(&a.config, &a.overrides)?;
            let rows = experiments::cond(&cfg)?;
            emit(&experiments::to_csv(&cfg, &rows)?, target(&a, &cfg).as_deref())
        }
        Command::Solve(a) => {
            let cfg = RunConfig::from_file(&a.config, &a.overrides)?;
            let report = experiments::solve_study(&cfg)?;
            if let Some(f) = &cfg.outputs.field {
                emit(&experiments::field_csv(&cfg, &report.field)?, Some(Path::new(f)))?;
            }
            emit(&experiments::to_csv(&cfg, &report.rows)?, target(&a, &cfg).as_deref())
        }
        Command::Basis(a) => {
            let cfg = RunConfig::from_file(&a.config, &a.overrides)?;
            emit(&experiments::basis_report(&cfg)?, a.out.as_deref())
        }
        Command::Mesh { generator, n, out } => {
            let g = match generator {
                MeshKind::UnitSquare => Generator::UnitSquare,
                MeshKind::Lshape => Generator::Lshape,
            };
            emit(&experiments::mesh_text(g, n)?, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qtdg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
