use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};

use prs_eis::io::{fmt_f64, sequence_to_csv, sequence_to_text};
use prs_eis::sequences::{dst_eigenvalue_factor, eigen_check, is_prime, is_valid_dst_basic_length, r_factor};
use prs_eis::{generate_dst, generate_qrt, harmonic_sets, TernarySequence};

use crate::manifest::{beside, Recorder, RunManifest};
use crate::{CliError, CliResult, Context};

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(subcommand)]
    pub family: GenFamily,
}

#[derive(Debug, Subcommand)]
pub enum GenFamily {
    /// Quadratic-residue ternary sequence of a prime length.
    Qrt {
        #[arg(long)]
        length: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Direct-synthesis ternary sequence of length 6 × basic.
    Dst {
        #[arg(long)]
        basic: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Sequence file to write (default: `<family>-<length>.txt` in the output directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SequenceFormat::Text)]
    pub format: SequenceFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SequenceFormat {
    /// One value per line.
    Text,
    /// `index,value` rows.
    Csv,
}

fn dst_basic(n: usize) -> CliResult<TernarySequence> {
    if !is_valid_dst_basic_length(n) {
        return Err(CliError::Usage(format!(
            "invalid DST basic length {n}: must be 5 + 6p or 7 + 6p"
        )));
    }
    if !is_prime(n as u64) {
        return Err(CliError::Usage(format!(
            "invalid DST basic length {n}: the basic QRT length must be prime"
        )));
    }
    Ok(generate_qrt(n)?)
}

/// `key = value` lines describing a generated sequence.
pub fn summary(seq: &TernarySequence) -> CliResult<String> {
    let sets = harmonic_sets(seq);
    let check = eigen_check(&seq.to_f64(), &sets.k_all)?;
    let lambda = check.eigenvalue.value();
    let mut out = String::new();
    let _ = writeln!(out, "family = {}", seq.family().name());
    let _ = writeln!(out, "length = {}", seq.len());
    let _ = writeln!(out, "basic_length = {}", seq.basic_length());
    let _ = writeln!(out, "eigenvalue = {}", check.eigenvalue.label());
    let _ = writeln!(out, "eigenvalue_re = {}", fmt_f64(lambda.re));
    let _ = writeln!(out, "eigenvalue_im = {}", fmt_f64(lambda.im));
    let _ = writeln!(out, "k_plus_size = {}", sets.k_plus.len());
    let _ = writeln!(out, "k_minus_size = {}", sets.k_minus.len());
    let _ = writeln!(out, "k_size = {}", sets.k_all.len());
    let _ = writeln!(out, "max_eigen_residual = {}", fmt_f64(check.max_residual));
    let _ = writeln!(out, "max_eigen_residual_k = {}", check.worst_k);
    let _ = writeln!(out, "max_suppressed_magnitude = {}", fmt_f64(check.max_leakage));
    let _ = writeln!(out, "max_suppressed_magnitude_k = {}", check.worst_leakage_k);
    if seq.family() == prs_eis::Family::Dst {
        let basic = generate_qrt(seq.basic_length())?;
        let _ = writeln!(out, "r_factor = {}", r_factor(&basic)?);
        let _ = writeln!(out, "eigenvalue_factor = {}", dst_eigenvalue_factor(&basic)?);
    }
    Ok(out)
}

pub fn run(args: &GenArgs, ctx: &Context) -> CliResult<RunManifest> {
    let (seq, output) = match &args.family {
        GenFamily::Qrt { length, output } => (generate_qrt(*length)?, output),
        GenFamily::Dst { basic, output } => (generate_dst(&dst_basic(*basic)?)?, output),
    };
    let path = output
        .out
        .clone()
        .unwrap_or_else(|| ctx.out_dir.join(format!("{}-{}.txt", seq.family().name(), seq.len())));
    let body = match output.format {
        SequenceFormat::Text => sequence_to_text(&seq),
        SequenceFormat::Csv => sequence_to_csv(&seq),
    };
    let text = summary(&seq)?;

    let mut rec = Recorder::new("gen", ctx);
    rec.option("family", seq.family().name());
    rec.option("length", seq.len());
    rec.option("format", format!("{:?}", output.format).to_lowercase());
    rec.section("summary", &text)?;
    rec.write(&path, body.as_bytes())?;
    let mut summary_path = path.clone().into_os_string();
    summary_path.push(".summary.txt");
    rec.write(&PathBuf::from(summary_path), text.as_bytes())?;
    let manifest = rec.finish(&beside(&path))?;

    println!("wrote {}", path.display());
    print!("{text}");
    Ok(manifest)
}
