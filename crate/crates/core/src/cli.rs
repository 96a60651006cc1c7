//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 configuration error,
//! 3 missing input, 4 violated assumption (rank, positivity), 5 solver
//! failure, 6 malformed or mis-sized input file. Failures print one line to
//! stderr:
//!
//! ```text
//! hdsa: error kind=config code=2 message="`prior.alpha` must be positive, got -1"
//! ```

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{CliOverrides, RunConfig, Stage};
use crate::error::Error;
use crate::pipeline::Pipeline;

#[derive(Debug, Parser)]
#[command(name = "hdsa", version, about = "Low-fidelity optimal control updated from high-fidelity data")]
pub struct Cli {
    /// Configuration file (`section.key = value` lines).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed for the prior sampler and oracle fixtures.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Comma-separated stages, e.g. `optimize,calibrate,update`.
    #[arg(long, global = true, value_name = "LIST")]
    pub stages: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured stages.
    Run,
    /// Write benchmark high-fidelity data to `<out>/data/`.
    ManufactureData,
    /// Compare factored formulas against dense references at tiny scale.
    OracleCheck,
    /// Rebuild `report.json` from persisted artifacts.
    Report,
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidParameter { .. } => 2,
        Error::MissingInput(_) => 3,
        Error::Assumption(_) => 4,
        Error::Singular { .. } | Error::Eigen(_) | Error::SizeGuard { .. } => 5,
        Error::Parse { .. } | Error::Dimension { .. } | Error::Json(_) => 6,
        Error::Io(_) => 1,
    }
}

pub fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Config(_) | Error::InvalidParameter { .. } => "config",
        Error::MissingInput(_) => "missing-input",
        Error::Assumption(_) => "assumption",
        Error::Singular { .. } | Error::Eigen(_) | Error::SizeGuard { .. } => "solver",
        Error::Parse { .. } | Error::Dimension { .. } | Error::Json(_) => "malformed-input",
        Error::Io(_) => "io",
    }
}

pub fn diagnostic(err: &Error) -> String {
    let message = err.to_string().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
    format!(
        "hdsa: error kind={} code={} message=\"{message}\"",
        error_kind(err),
        exit_code(err)
    )
}

/// Executes a parsed command line and returns the lines meant for stdout.
pub fn execute(cli: &Cli, env: impl Fn(&str) -> Option<String>) -> crate::Result<Vec<String>> {
    let overrides = CliOverrides {
        out_dir: cli.out.clone(),
        seed: cli.seed,
        stages: cli.stages.clone(),
    };
    let config = RunConfig::load(cli.config.as_deref(), env, &overrides)?;
    let pipeline = Pipeline::new(config)?;
    let records = match cli.command {
        Command::Run => pipeline.run()?,
        Command::OracleCheck => vec![pipeline.run_stage(Stage::OracleCheck)?],
        Command::Report => vec![pipeline.run_stage(Stage::Report)?],
        Command::ManufactureData => {
            let data = pipeline.write_manufactured_data()?;
            return Ok(vec![format!(
                "wrote {} data pairs to {}",
                data.len(),
                pipeline.out_dir().join("data").display()
            )]);
        }
    };
    Ok(records
        .iter()
        .map(|r| format!("{:<13} {:>9.3}s  {}", r.stage.name(), r.wall_time_s, &r.inputs_sha256[..12]))
        .collect())
}

/// Parses `args`, runs, and maps the outcome to an exit code.
pub fn run_from<I, T>(args: I, env: impl Fn(&str) -> Option<String>) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli, env) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", diagnostic(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}

pub fn main() -> ExitCode {
    run_from(std::env::args_os(), |k| std::env::var(k).ok())
}
