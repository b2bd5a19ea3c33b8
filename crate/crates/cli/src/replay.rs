use std::path::PathBuf;

use clap::{Args, Parser};

use crate::manifest::{self, RunManifest};
use crate::{Cli, CliError, CliResult, Command, Context};

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    pub manifest: PathBuf,
}

/// Re-runs the recorded command from its recorded working and output
/// directories, then compares every output hash with the recorded one.
pub fn run(args: &ReplayArgs) -> CliResult<RunManifest> {
    let old = manifest::read(&args.manifest)?;
    let cli = Cli::try_parse_from(&old.argv)
        .map_err(|e| CliError::Usage(format!("recorded command line does not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::Usage("a replay manifest cannot be replayed".into()));
    }
    std::env::set_current_dir(&old.cwd)
        .map_err(|e| CliError::Usage(format!("recorded working directory {}: {e}", old.cwd)))?;
    let ctx = Context {
        argv: old.argv.clone(),
        out_dir: PathBuf::from(&old.out_dir),
    };
    let new = crate::run(&cli, &ctx)?;

    let mut mismatched = Vec::new();
    for want in &old.outputs {
        match new.outputs.iter().find(|f| f.path == want.path) {
            Some(got) if got.sha256 == want.sha256 => {}
            Some(_) => mismatched.push(format!("{} (hash differs)", want.path)),
            None => mismatched.push(format!("{} (not written)", want.path)),
        }
    }
    if !mismatched.is_empty() {
        return Err(CliError::Check(format!("replay diverged: {}", mismatched.join(", "))));
    }
    println!("replay: {} outputs reproduced byte for byte", old.outputs.len());
    Ok(new)
}
