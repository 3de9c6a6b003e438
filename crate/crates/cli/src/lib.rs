//! Command-line front end: TOML configs in, deterministic CSV and text reports out.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "beamnet", version, about = "Simulate, control and reconstruct networks of beams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Cells per beam, overrides the config.
    #[arg(long, global = true)]
    pub nx: Option<usize>,
    #[arg(long, global = true)]
    pub cfl: Option<f64>,
    /// Verification tolerance (control) or compatibility threshold (check).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Trajectory CSV for `reconstruct`; defaults to `<out-dir>/trajectory.csv`.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Forward solve, writes trajectory.csv.
    Simulate,
    /// Synthesize nodal controls, writes control_node*.csv, trajectory.csv, control_report.txt.
    Control,
    /// Positions and rotations from a trajectory CSV, writes centerline.csv.
    Reconstruct,
    /// Print the solve schedule of the [plan] block.
    Plan,
    /// Validation, compatibility and planner sufficiency reports.
    Check,
}

pub fn run(cli: &Cli) -> CliResult<Vec<String>> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Parse("--config <path> is required".into()))?;
    let (config, spec) = config::load_config(path)?;
    let out_dir = commands::out_dir(cli.out_dir.as_deref(), &config);
    let ctx = commands::Context {
        nx: cli.nx.unwrap_or(config.simulation.nx),
        cfl: cli.cfl.unwrap_or(config.simulation.cfl),
        tol: cli.tol,
        input: cli.input.clone(),
        out_dir,
        config,
        spec,
    };
    if ctx.nx < 2 || !(ctx.cfl > 0.0 && ctx.cfl <= 1.0) {
        return Err(CliError::Validation(format!("need nx >= 2 and cfl in (0, 1], got {} and {}", ctx.nx, ctx.cfl)));
    }
    match cli.command {
        Command::Simulate => commands::simulate(&ctx),
        Command::Control => commands::control(&ctx),
        Command::Reconstruct => commands::reconstruct_cmd(&ctx),
        Command::Plan => commands::plan(&ctx),
        Command::Check => commands::check(&ctx),
    }
}
