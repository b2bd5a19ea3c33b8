use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn prs_eis(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prs-eis"))
        .args(args)
        .current_dir(dir)
        .env_remove("PRS_EIS_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn manifest(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn output_hashes(m: &Value) -> Vec<(String, String)> {
    m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| {
            (
                f["path"].as_str().unwrap().to_string(),
                f["sha256"].as_str().unwrap().to_string(),
            )
        })
        .collect()
}

fn lines(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

const SMALL_ONE: &str = "n_p = 42\nf_zoh = 1500\nf_s = 15000\nperiods_p = 1\n";
const SMALL_TWO: &str = "n_p = 42\nf_zoh = 1500\nf_s = 15000\nperiods_p = 2\n";

/// Writes `dst-42.txt` and the two small configs into `dir`.
fn small_setup(dir: &Path) {
    assert_eq!(code(&prs_eis(dir, &["gen", "dst", "--basic", "7"])), 0);
    fs::write(dir.join("one.txt"), SMALL_ONE).unwrap();
    fs::write(dir.join("two.txt"), SMALL_TWO).unwrap();
    fs::write(
        dir.join("scenario.txt"),
        "sigma_v_volt = 0.0005\nsigma_i_amp = 0.0005\nseed = 3\ni0_offset_a = 2\n",
    )
    .unwrap();
}

#[test]
fn gen_dst_seven_writes_forty_two_values_with_twelve_excited() {
    let dir = tempfile::tempdir().unwrap();
    let out = prs_eis(dir.path(), &["gen", "dst", "--basic", "7"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(lines(&dir.path().join("dst-42.txt")), 42);
    let text = stdout(&out);
    assert!(text.contains("k_size = 12"));
    assert!(text.contains("k_plus_size = 6"));
    assert!(text.contains("k_minus_size = 6"));

    let m = manifest(&dir.path().join("dst-42.txt.manifest.json"));
    assert_eq!(m["command"], "gen");
    let hashes = output_hashes(&m);
    assert_eq!(hashes.len(), 2);
    assert!(hashes[0].0.ends_with("dst-42.txt"));
}

#[test]
fn gen_qrt_rejects_non_prime_length() {
    let dir = tempfile::tempdir().unwrap();
    let out = prs_eis(dir.path(), &["gen", "qrt", "--length", "9"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("prime"), "{}", stderr(&out));
    let out = prs_eis(dir.path(), &["gen", "dst", "--basic", "9"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("5 + 6p or 7 + 6p"));
}

#[test]
fn gen_dst_table_length_and_csv_format() {
    let dir = tempfile::tempdir().unwrap();
    let out = prs_eis(
        dir.path(),
        &["gen", "dst", "--basic", "1667", "--format", "csv", "--out", "seq.csv"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(lines(&dir.path().join("seq.csv")), 10002 + 1);
    assert_eq!(code(&prs_eis(dir.path(), &["verify", "seq.csv"])), 0);
}

#[test]
fn out_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_prs-eis"))
        .args(["gen", "qrt", "--length", "7"])
        .current_dir(dir.path())
        .env("PRS_EIS_OUT_DIR", "artifacts")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("artifacts/qrt-7.txt").exists());
    assert!(dir.path().join("artifacts/qrt-7.txt.manifest.json").exists());
}

#[test]
fn verify_passes_generated_and_flags_corrupted_entry() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&prs_eis(dir.path(), &["gen", "dst", "--basic", "7"])), 0);
    let out = prs_eis(dir.path(), &["verify", "dst-42.txt"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(!stdout(&out).contains("FAIL"));

    let path = dir.path().join("dst-42.txt");
    let mut values: Vec<String> = fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
    values[23] = if values[23] == "1" { "-1".into() } else { "1".into() };
    fs::write(&path, values.join("\n")).unwrap();
    let out = prs_eis(dir.path(), &["verify", "dst-42.txt"]);
    assert_eq!(code(&out), 3);
    let report = stdout(&out);
    let line = report
        .lines()
        .find(|l| l.starts_with("FAIL eigenvector"))
        .expect(&report);
    assert!(line.contains("at k = "), "{line}");
}

#[test]
fn verify_qrt_thirteen_is_multiplicative() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&prs_eis(dir.path(), &["gen", "qrt", "--length", "13"])), 0);
    let out = prs_eis(dir.path(), &["verify", "qrt-13.txt"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("PASS multiplicativity"));

    // a completely multiplicative sequence must vanish at 0
    fs::write(dir.path().join("bad.txt"), "1\n1\n-1\n").unwrap();
    let out = prs_eis(dir.path(), &["verify", "bad.txt"]);
    assert_eq!(code(&out), 3);
    assert!(stdout(&out).contains("FAIL multiplicativity"));
}

#[test]
fn verify_unreadable_sequence_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.txt"), "1\n2\n").unwrap();
    assert_eq!(code(&prs_eis(dir.path(), &["verify", "bad.txt"])), 2);
    assert_eq!(code(&prs_eis(dir.path(), &["verify", "missing.txt"])), 2);
}

#[test]
fn zero_noise_simulation_ignores_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    small_setup(dir.path());
    let base = [
        "simulate",
        "--scenario",
        "scenario.txt",
        "--sequence",
        "dst-42.txt",
        "--config",
        "one.txt",
        "--zero-noise",
    ];
    let a = prs_eis(dir.path(), &[&base[..], &["--seed", "1", "--out", "a.csv"]].concat());
    let b = prs_eis(dir.path(), &[&base[..], &["--seed", "2", "--out", "b.csv"]].concat());
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(code(&b), 0);
    assert_eq!(
        fs::read(dir.path().join("a.csv")).unwrap(),
        fs::read(dir.path().join("b.csv")).unwrap()
    );
    assert_eq!(lines(&dir.path().join("a.csv")), 420 + 1);

    let noisy = [
        "simulate",
        "--scenario",
        "scenario.txt",
        "--sequence",
        "dst-42.txt",
        "--config",
        "one.txt",
    ];
    prs_eis(dir.path(), &[&noisy[..], &["--seed", "1", "--out", "c.csv"]].concat());
    prs_eis(dir.path(), &[&noisy[..], &["--seed", "2", "--out", "d.csv"]].concat());
    assert_ne!(
        fs::read(dir.path().join("c.csv")).unwrap(),
        fs::read(dir.path().join("d.csv")).unwrap()
    );
}

#[test]
fn missing_ocv_file_falls_back_to_built_in_curve() {
    let dir = tempfile::tempdir().unwrap();
    small_setup(dir.path());
    let out = prs_eis(
        dir.path(),
        &[
            "simulate",
            "--scenario",
            "scenario.txt",
            "--sequence",
            "dst-42.txt",
            "--config",
            "one.txt",
            "--out",
            "r.csv",
        ],
    );
    assert_eq!(code(&out), 0);
    let m = manifest(&dir.path().join("r.csv.manifest.json"));
    let notes: Vec<&str> = m["notes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|n| n.as_str().unwrap())
        .collect();
    assert!(notes.iter().any(|n| n.contains("built-in OCV")), "{notes:?}");
    assert_eq!(m["rng_seeds"][0], 3);
    assert_eq!(m["inputs"].as_array().unwrap().len(), 3);
}

#[test]
fn operando_on_multi_period_record_asks_for_a_split() {
    let dir = tempfile::tempdir().unwrap();
    small_setup(dir.path());
    let sim = prs_eis(
        dir.path(),
        &[
            "simulate",
            "--scenario",
            "scenario.txt",
            "--sequence",
            "dst-42.txt",
            "--config",
            "two.txt",
            "--out",
            "r.csv",
        ],
    );
    assert_eq!(code(&sim), 0);
    let out = prs_eis(
        dir.path(),
        &[
            "estimate",
            "--record",
            "r.csv",
            "--sequence",
            "dst-42.txt",
            "--config",
            "two.txt",
            "--mode",
            "operando",
        ],
    );
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("split"), "{}", stderr(&out));
}

#[test]
fn steady_estimate_writes_impedance_and_distortion() {
    let dir = tempfile::tempdir().unwrap();
    small_setup(dir.path());
    prs_eis(
        dir.path(),
        &[
            "simulate",
            "--scenario",
            "scenario.txt",
            "--sequence",
            "dst-42.txt",
            "--config",
            "two.txt",
            "--out",
            "r.csv",
        ],
    );
    let out = prs_eis(
        dir.path(),
        &[
            "estimate",
            "--record",
            "r.csv",
            "--sequence",
            "dst-42.txt",
            "--config",
            "two.txt",
            "--mode",
            "steady",
            "--discard",
            "1",
            "--out",
            "z.csv",
            "--nonlinearity",
            "nl.csv",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = prs_eis::io::parse_impedance_csv(&fs::read_to_string(dir.path().join("z.csv")).unwrap()).unwrap();
    // DST-42 sampled at 15 kHz with a 1.5 kHz hold: every excited k below 1 kHz
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.z.is_some()));
    assert!(fs::read_to_string(dir.path().join("nl.csv"))
        .unwrap()
        .starts_with("k,f_hz,even_mag_v"));

    let bad = prs_eis(
        dir.path(),
        &[
            "estimate",
            "--record",
            "r.csv",
            "--sequence",
            "dst-42.txt",
            "--config",
            "two.txt",
            "--mode",
            "steady",
            "--discard",
            "2",
        ],
    );
    assert_eq!(code(&bad), 2);
}

#[test]
fn estimate_is_deterministic_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    small_setup(dir.path());
    prs_eis(
        dir.path(),
        &[
            "simulate",
            "--scenario",
            "scenario.txt",
            "--sequence",
            "dst-42.txt",
            "--config",
            "one.txt",
            "--out",
            "r.csv",
        ],
    );
    let args = |out: &'static str| {
        vec![
            "estimate",
            "--record",
            "r.csv",
            "--sequence",
            "dst-42.txt",
            "--config",
            "one.txt",
            "--mode",
            "operando",
            "--zoh-correction",
            "--out",
            out,
        ]
    };
    assert_eq!(code(&prs_eis(dir.path(), &args("z1.csv"))), 0);
    assert_eq!(code(&prs_eis(dir.path(), &args("z2.csv"))), 0);
    let h1 = output_hashes(&manifest(&dir.path().join("z1.csv.manifest.json")));
    let h2 = output_hashes(&manifest(&dir.path().join("z2.csv.manifest.json")));
    assert_eq!(h1[0].1, h2[0].1);

    fs::write(dir.path().join("z1.csv"), "tampered\n").unwrap();
    let out = prs_eis(dir.path(), &["replay", "z1.csv.manifest.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let again = output_hashes(&manifest(&dir.path().join("z1.csv.manifest.json")));
    assert_eq!(again, h1);
}

#[test]
fn replay_reports_divergent_outputs() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&prs_eis(dir.path(), &["gen", "qrt", "--length", "11"])), 0);
    let path = dir.path().join("qrt-11.txt.manifest.json");
    let mut m = manifest(&path);
    m["outputs"][0]["sha256"] = Value::String("0".repeat(64));
    fs::write(&path, serde_json::to_string(&m).unwrap()).unwrap();
    let out = prs_eis(dir.path(), &["replay", "qrt-11.txt.manifest.json"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("hash differs"));
}

#[test]
fn reference_record_round_trip_through_simulate_and_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&prs_eis(d, &["gen", "dst", "--basic", "1667"])), 0);
    fs::write(
        d.join("table.txt"),
        "n_p = 10002\namplitude_c = 1\nf_zoh = 1500\nf_s = 150000\nperiods_p = 1\n",
    )
    .unwrap();
    fs::write(
        d.join("charging.txt"),
        "soc0_pct = 20\ncapacity_ah = 5\nsigma_v_volt = 0.0005\nsigma_i_amp = 0.0005\nseed = 0\n\
         i0_offset_a = 2.5\ni0_slope_a_per_s = -0.074985002999400120\nmode = state-space\ninitial_state = slow-steady-state\n",
    )
    .unwrap();
    let sim = prs_eis(
        d,
        &[
            "simulate",
            "--scenario",
            "charging.txt",
            "--sequence",
            "dst-10002.txt",
            "--config",
            "table.txt",
            "--out",
            "rec.csv",
        ],
    );
    assert_eq!(code(&sim), 0, "{}", stderr(&sim));
    assert_eq!(lines(&d.join("rec.csv")), 1_000_200 + 1);

    let est = prs_eis(
        d,
        &[
            "estimate",
            "--record",
            "rec.csv",
            "--sequence",
            "dst-10002.txt",
            "--config",
            "table.txt",
            "--mode",
            "operando",
            "--out",
            "z.csv",
        ],
    );
    assert_eq!(code(&est), 0, "{}", stderr(&est));
    let rows = prs_eis::io::parse_impedance_csv(&fs::read_to_string(d.join("z.csv")).unwrap()).unwrap();
    let kept: Vec<_> = rows.iter().filter(|r| r.z.is_some()).collect();
    assert!((kept[0].freq_hz - 1.05).abs() < 5e-3, "{}", kept[0].freq_hz);
    let top = kept.last().unwrap().freq_hz;
    assert!(top <= 1000.0 && top > 999.0, "{top}");
}

#[test]
fn steady_two_period_reference_record_starts_at_lowest_harmonic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&prs_eis(d, &["gen", "dst", "--basic", "1667"])), 0);
    fs::write(d.join("table.txt"), "periods_p = 2\n").unwrap();
    fs::write(d.join("quiet.txt"), "mode = state-space\n").unwrap();
    let sim = prs_eis(
        d,
        &[
            "simulate",
            "--scenario",
            "quiet.txt",
            "--sequence",
            "dst-10002.txt",
            "--config",
            "table.txt",
            "--out",
            "rec.csv",
        ],
    );
    assert_eq!(code(&sim), 0, "{}", stderr(&sim));
    let est = prs_eis(
        d,
        &[
            "estimate",
            "--record",
            "rec.csv",
            "--sequence",
            "dst-10002.txt",
            "--config",
            "table.txt",
            "--mode",
            "steady",
            "--discard",
            "1",
            "--out",
            "z.csv",
        ],
    );
    assert_eq!(code(&est), 0, "{}", stderr(&est));
    let rows = prs_eis::io::parse_impedance_csv(&fs::read_to_string(d.join("z.csv")).unwrap()).unwrap();
    assert!((rows[0].freq_hz - 0.15).abs() < 5e-4);
    assert!(rows.iter().all(|r| r.z.is_some()));
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn pipeline_writes_error_table_seed_summary_and_bursts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = prs_eis(
        d,
        &[
            "pipeline",
            "--scenario",
            "paper-sec6",
            "--seeds",
            "2",
            "--burst-schedule",
            "20x108s",
            "--out-dir",
            "run",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let run = d.join("run");
    for f in [
        "dst-10002.txt",
        "record-seed-0.csv",
        "fig3_steady_impedance.csv",
        "fig4_nonlinearity.csv",
        "fig5_operando_components.csv",
        "fig6_error_table.csv",
        "seeds_summary.csv",
        "bursts/multi_soc_impedance.csv",
        "manifest.json",
    ] {
        assert!(run.join(f).exists(), "{f}");
    }

    // error table: reconstruction beats plain division below 10 Hz
    let table = csv_rows(&run.join("fig6_error_table.csv"));
    let low: Vec<&Vec<String>> = table
        .iter()
        .filter(|r| r[1].parse::<f64>().unwrap() < 10.0 && !r[11].is_empty())
        .collect();
    assert!(!low.is_empty());
    let hat: f64 = low.iter().map(|r| r[11].parse::<f64>().unwrap()).sum();
    let naive: f64 = low.iter().map(|r| r[12].parse::<f64>().unwrap()).sum();
    assert!(hat < naive, "{hat} vs {naive}");

    let summary = csv_rows(&run.join("seeds_summary.csv"));
    assert!(summary.iter().all(|r| r[2] == "2"));

    let schedule = csv_rows(&run.join("bursts/schedule.csv"));
    assert_eq!(schedule.len(), 20);
    assert_eq!(schedule[1][1].parse::<f64>().unwrap(), 108.0);
    let bursts: std::collections::BTreeSet<String> = csv_rows(&run.join("bursts/multi_soc_impedance.csv"))
        .into_iter()
        .map(|r| r[0].clone())
        .collect();
    assert_eq!(bursts.len(), 20);

    let m = manifest(&run.join("manifest.json"));
    assert_eq!(m["rng_seeds"].as_array().unwrap().len(), 2 + 20);
}

#[test]
fn pipeline_rejects_bad_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let out = prs_eis(
        dir.path(),
        &["pipeline", "--scenario", "paper-sec6", "--burst-schedule", "twenty"],
    );
    assert_eq!(code(&out), 2);
    let out = prs_eis(dir.path(), &["pipeline", "--scenario", "elsewhere"]);
    assert_eq!(code(&out), 2);
}
