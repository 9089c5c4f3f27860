//! Command-line front end behind the `frlc` binary.
//!
//! Every command accepts `--config file.json`; keys are the long flag names and flags
//! override them. Exit codes: 0 success, 1 input or runtime error, 2 finished but not
//! converged (outputs are still written).

mod bench;
mod config;
mod partition;
mod project;
mod solve;

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::{Parser, Subcommand};
use serde_json::Value;

use crate::error::OtError;

pub use bench::BenchArgs;
pub use partition::PartitionArgs;
pub use project::ProjectArgs;
pub use solve::SolveArgs;

/// Version of the `report.json` layout.
pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Ot(#[from] OtError),
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// How a command that ran to completion finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    Unconverged,
}

impl Outcome {
    pub fn from_flag(converged: bool) -> Self {
        if converged {
            Outcome::Converged
        } else {
            Outcome::Unconverged
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Converged => 0,
            Outcome::Unconverged => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "frlc", version, about = "Low-rank optimal transport with latent-coupling factorizations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one transport problem from cost files or a dataset preset.
    Solve(SolveArgs),
    /// Sweep ranks, seeds and initializations on a dataset preset.
    Bench(BenchArgs),
    /// Partition a graph by semi-relaxed GW transport to a small template.
    Partition(PartitionArgs),
    /// Barycentric projection of two point clouds through saved factors.
    Project(ProjectArgs),
}

/// Parse `args` (program name first), run the command and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Solve(a) => solve::run(a),
        Command::Bench(a) => bench::run(a),
        Command::Partition(a) => partition::run(a),
        Command::Project(a) => project::run(a),
    };
    match result {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub(crate) fn write_report(dir: &Path, report: &Value) -> CliResult<()> {
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)? + "\n")?;
    Ok(())
}

pub(crate) fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}
