use std::path::PathBuf;

use clap::Args;

use prs_eis::io::{
    config_to_string, load_sequence, read_config, read_scenario, record_to_csv, scenario_to_string, OcvSource,
};
use prs_eis::{simulate_response, synthesize_excitation};

use crate::manifest::{beside, Recorder, RunManifest};
use crate::{CliResult, Context};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario file (`key = value`).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Sequence file.
    #[arg(long)]
    pub sequence: PathBuf,
    /// Measurement config file (`key = value`).
    #[arg(long)]
    pub config: PathBuf,
    /// Record CSV to write (default: `record.csv` in the output directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the scenario's noise seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Drop all measurement noise.
    #[arg(long)]
    pub zero_noise: bool,
}

pub fn run(args: &SimulateArgs, ctx: &Context) -> CliResult<RunManifest> {
    let seq = load_sequence(&args.sequence)?;
    let cfg = read_config(&args.config)?;
    let file = read_scenario(&args.scenario)?;
    let mut scenario = file.scenario;
    if let Some(seed) = args.seed {
        scenario.rng_seed = seed;
    }
    if args.zero_noise {
        scenario = scenario.without_noise();
    }
    let noisy = scenario.noise_sigma_v > 0.0 || scenario.noise_sigma_i > 0.0;

    let record = simulate_response(&synthesize_excitation(&seq, &cfg)?, &scenario)?;
    let path = args.out.clone().unwrap_or_else(|| ctx.out_dir.join("record.csv"));

    let mut rec = Recorder::new("simulate", ctx);
    for input in [&args.scenario, &args.sequence, &args.config] {
        rec.input(input)?;
    }
    let ocv_file = match &file.ocv_source {
        OcvSource::File(p) => Some(p.as_path()),
        OcvSource::BuiltIn => {
            rec.note("scenario names no ocv_file; using the built-in OCV curve");
            None
        }
    };
    rec.section("measurement", &config_to_string(&cfg))?;
    rec.section("scenario", &scenario_to_string(&scenario, ocv_file))?;
    rec.option("zero_noise", args.zero_noise);
    if noisy {
        rec.seed(scenario.rng_seed);
    } else {
        rec.note("noise-free run; output does not depend on the seed");
    }
    if record.soc_out_of_range {
        rec.note("state of charge left [0, 100] % during the run");
    }
    rec.write(&path, record_to_csv(&record).as_bytes())?;
    let manifest = rec.finish(&beside(&path))?;

    println!(
        "wrote {} ({} samples, {} s at {} Hz, mode {})",
        path.display(),
        record.len(),
        record.duration(),
        record.f_s,
        scenario.mode.name()
    );
    Ok(manifest)
}
