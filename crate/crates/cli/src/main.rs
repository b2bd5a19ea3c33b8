//! `prs-eis`: generate and verify ternary excitation sequences, simulate cell
//! responses and estimate impedance from recorded bursts.

mod estimate;
mod gen;
mod manifest;
mod pipeline;
mod replay;
mod simulate;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use manifest::RunManifest;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "PRS_EIS_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "prs-eis",
    version,
    about = "Pseudo-random ternary sequences for battery impedance"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a QRT or DST sequence file and its property summary.
    Gen(gen::GenArgs),
    /// Check a sequence file against the eigenvector properties.
    Verify(verify::VerifyArgs),
    /// Simulate the cell response to an excitation.
    Simulate(simulate::SimulateArgs),
    /// Estimate impedance from a recorded current/voltage pair.
    Estimate(estimate::EstimateArgs),
    /// Run an end-to-end simulation study and write all artifacts.
    Pipeline(pipeline::PipelineArgs),
    /// Re-run the command recorded in a manifest and compare output hashes.
    Replay(replay::ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::Verify(_) => "verify",
            Command::Simulate(_) => "simulate",
            Command::Estimate(_) => "estimate",
            Command::Pipeline(_) => "pipeline",
            Command::Replay(_) => "replay",
        }
    }
}

/// Failure classes, mapped onto exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or inputs (exit 2).
    Usage(String),
    /// A numerical check did not hold (exit 3).
    Check(String),
    Core(prs_eis::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Check(_) => 3,
            CliError::Core(prs_eis::Error::NotEigenvector { .. }) => 3,
            CliError::Core(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Check(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<prs_eis::Error> for CliError {
    fn from(e: prs_eis::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// What every command needs besides its own arguments.
#[derive(Debug, Clone)]
pub struct Context {
    pub argv: Vec<String>,
    pub out_dir: PathBuf,
}

impl Context {
    fn from_env() -> Self {
        let out_dir = std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."));
        Self {
            argv: std::env::args().collect(),
            out_dir,
        }
    }
}

pub fn run(cli: &Cli, ctx: &Context) -> CliResult<RunManifest> {
    match &cli.command {
        Command::Gen(a) => gen::run(a, ctx),
        Command::Verify(a) => verify::run(a, ctx),
        Command::Simulate(a) => simulate::run(a, ctx),
        Command::Estimate(a) => estimate::run(a, ctx),
        Command::Pipeline(a) => pipeline::run(a, ctx),
        Command::Replay(a) => replay::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli, &Context::from_env()) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
