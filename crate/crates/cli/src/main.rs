//! `nonholo`: scene-file driven front end for guiding-field path following.
//!
//! Exit codes: 0 ok, 1 check or verification failure, 2 usage or schema
//! error, 3 numeric failure.

mod commands;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] nonholo::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 2,
            CliError::Core(e) if e.is_numeric() => 3,
            CliError::Core(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nonholo", version, about = "Guiding vector fields for closed paths under a Pfaffian constraint")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Scene file (JSON).
    #[arg(long)]
    pub scene: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides `numerics.rng_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run even if the scene fails its assumption checks.
    #[arg(long)]
    pub force: bool,
    /// Keep outputs of an earlier identical run whose digests still match.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the scene assumptions.
    Check(Common),
    /// Trace the path and write its polyline.
    Trace(Common),
    /// Integrate the guiding field from each start.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// A count of random tube starts, or points `x1,x2,x3;x1,x2,x3;...`.
        #[arg(long, default_value = "5")]
        starts: String,
        /// Overrides `numerics.max_time`.
        #[arg(long)]
        max_time: Option<f64>,
    },
    /// Parallel projection of points onto the path.
    Project {
        #[command(flatten)]
        common: Common,
        /// A count of random tube points, or points `x1,x2,x3;...`.
        #[arg(long, default_value = "5")]
        starts: String,
    },
    /// Horizontal lift of a base curve from a start point.
    Lift {
        #[command(flatten)]
        common: Common,
        /// Start point `x1,x2,x3`; defaults to the first path node.
        #[arg(long)]
        starts: Option<String>,
        /// Straight base segment to `f,g`.
        #[arg(long, conflicts_with = "turns")]
        to: Option<String>,
        /// Turns around the base origin at the start's base radius.
        #[arg(long)]
        turns: Option<f64>,
    },
    /// Run the verification suite and write report.json.
    Verify(Common),
    /// Scale the convergence weight and summarize each run.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated scale factors for the convergence weight.
        #[arg(long, allow_hyphen_values = true)]
        b_scale: String,
        #[arg(long, default_value = "4")]
        starts: String,
        #[arg(long)]
        max_time: Option<f64>,
        /// H level whose first crossing time is reported.
        #[arg(long, default_value_t = 1e-6)]
        h_target: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check(c) => commands::check(&c),
        Command::Trace(c) => commands::trace(&c),
        Command::Simulate { common, starts, max_time } => commands::simulate(&common, &starts, max_time),
        Command::Project { common, starts } => commands::project(&common, &starts),
        Command::Lift { common, starts, to, turns } => commands::lift(&common, starts.as_deref(), to.as_deref(), turns),
        Command::Verify(c) => commands::verify(&c),
        Command::Sweep { common, b_scale, starts, max_time, h_target } => {
            commands::sweep(&common, &b_scale, &starts, max_time, h_target)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
