use std::path::PathBuf;

use clap::{Args, ValueEnum};

use prs_eis::io::{config_to_string, impedance_to_csv, load_sequence, nonlinearity_to_csv, read_config, read_record};
use prs_eis::{nonlinearity_levels, operando_reconstruct, steady_state_impedance, ImpedanceSpectrum, OperandoOptions};

use crate::manifest::{beside, Recorder, RunManifest};
use crate::{CliError, CliResult, Context};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Plain V/I on a periodic steady state.
    Steady,
    /// Single-period reconstruction with drift and transient suppression.
    Operando,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Record CSV (`t_s,i_A,v_V`).
    #[arg(long)]
    pub record: PathBuf,
    #[arg(long)]
    pub sequence: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Leading periods to discard (steady mode).
    #[arg(long, default_value_t = 0)]
    pub discard: usize,
    /// Use the exact hold response on the partner set (operando mode).
    #[arg(long)]
    pub zoh_correction: bool,
    /// Drop harmonics whose current is below this fraction of the median excited current (operando mode).
    #[arg(long, default_value_t = OperandoOptions::default().current_floor)]
    pub current_floor: f64,
    /// Impedance CSV to write (default: `impedance.csv` in the output directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the distortion readout here (steady mode, DST only).
    #[arg(long)]
    pub nonlinearity: Option<PathBuf>,
    /// Also write plain V/I here (operando mode).
    #[arg(long)]
    pub naive: Option<PathBuf>,
}

fn band(z: &ImpedanceSpectrum) -> String {
    match (z.first_kept(), z.kept().last()) {
        (Some(a), Some(b)) => format!(
            "{} of {} harmonics kept, {:.4} Hz to {:.4} Hz",
            z.kept().count(),
            z.len(),
            a.freq_hz,
            b.freq_hz
        ),
        _ => format!("no harmonic kept out of {}", z.len()),
    }
}

pub fn run(args: &EstimateArgs, ctx: &Context) -> CliResult<RunManifest> {
    match args.mode {
        Mode::Steady if args.zoh_correction || args.naive.is_some() => {
            return Err(CliError::Usage(
                "--zoh-correction and --naive need --mode operando".into(),
            ));
        }
        Mode::Operando if args.discard > 0 || args.nonlinearity.is_some() => {
            return Err(CliError::Usage(
                "--discard and --nonlinearity need --mode steady; operando uses a single period".into(),
            ));
        }
        _ => {}
    }
    let seq = load_sequence(&args.sequence)?;
    let cfg = read_config(&args.config)?;
    let record = read_record(&args.record)?;
    let path = args.out.clone().unwrap_or_else(|| ctx.out_dir.join("impedance.csv"));

    let mut rec = Recorder::new("estimate", ctx);
    for input in [&args.record, &args.sequence, &args.config] {
        rec.input(input)?;
    }
    rec.section("measurement", &config_to_string(&cfg))?;
    rec.option("mode", format!("{:?}", args.mode).to_lowercase());

    let z = match args.mode {
        Mode::Steady => {
            rec.option("discard", args.discard);
            let z = steady_state_impedance(&record, &seq, &cfg, args.discard)?;
            if let Some(nl_path) = &args.nonlinearity {
                let spp = cfg.samples_per_period();
                let window = record.window(args.discard * spp, record.len() - args.discard * spp)?;
                let report = nonlinearity_levels(&window, &seq, &z.config)?;
                rec.write(nl_path, nonlinearity_to_csv(&report).as_bytes())?;
                println!(
                    "distortion: even rms {:.3e} V, odd rms {:.3e} V, median noise floor {:.3e} V",
                    report.even_rms(),
                    report.odd_rms(),
                    report.noise_floor.median
                );
            }
            z
        }
        Mode::Operando => {
            let options = OperandoOptions {
                zoh_correction: args.zoh_correction,
                current_floor: args.current_floor,
                ..OperandoOptions::default()
            };
            rec.option("zoh_correction", args.zoh_correction);
            rec.option("current_floor", args.current_floor);
            let out = operando_reconstruct(&record, &seq, &cfg, &options)?;
            if let Some(naive_path) = &args.naive {
                rec.write(naive_path, impedance_to_csv(&out.naive).as_bytes())?;
            }
            rec.note(format!("widest partner gap {}", out.max_partner_gap));
            out.reconstructed
        }
    };
    rec.write(&path, impedance_to_csv(&z).as_bytes())?;
    let manifest = rec.finish(&beside(&path))?;
    println!("wrote {}: {}", path.display(), band(&z));
    Ok(manifest)
}
