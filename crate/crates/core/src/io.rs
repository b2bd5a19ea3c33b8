//! Text formats: sequences, measurement configs, simulation scenarios,
//! time-series records and spectra.
//!
//! Floats are written with 17 significant digits so every value round-trips
//! exactly. Files are written to a temporary sibling and renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::battery_sim::{Distortion, EcmParams, OcvCurve, SimMode, SimScenario, SlowCurrent};
use crate::error::{Error, Result};
use crate::estimator::{ImpedanceSpectrum, NonlinearityReport, Provenance};
use crate::excitation::{MeasurementConfig, TimeSeriesRecord};
use crate::sequences::{Family, TernarySequence};
use crate::spectral::ComplexSpectrum;

/// Round-trip float formatting.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `contents` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

// ---------------------------------------------------------------- sequences

pub fn sequence_to_text(seq: &TernarySequence) -> String {
    let mut out = String::with_capacity(3 * seq.len());
    for v in seq.values() {
        let _ = writeln!(out, "{v}");
    }
    out
}

pub fn sequence_to_csv(seq: &TernarySequence) -> String {
    let mut out = String::from("index,value\n");
    for (i, v) in seq.values().iter().enumerate() {
        let _ = writeln!(out, "{i},{v}");
    }
    out
}

/// Parses either format: one integer per line, or `index,value` rows with an
/// optional header. Blank lines and `#` comments are ignored.
pub fn parse_sequence(text: &str) -> Result<Vec<i8>> {
    let mut values = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let field = match line.split_once(',') {
            Some((idx, val)) => {
                if idx.trim().parse::<usize>().is_err() {
                    if values.is_empty() {
                        continue;
                    }
                    return Err(Error::Parse {
                        line: n + 1,
                        message: format!("bad index `{idx}`"),
                    });
                }
                if idx.trim().parse::<usize>().ok() != Some(values.len()) {
                    return Err(Error::Parse {
                        line: n + 1,
                        message: format!("expected index {}", values.len()),
                    });
                }
                val.trim()
            }
            None => line,
        };
        let v: i8 = field.parse().map_err(|_| Error::Parse {
            line: n + 1,
            message: format!("`{field}` is not an integer in {{-1, 0, 1}}"),
        })?;
        if !(-1..=1).contains(&v) {
            return Err(Error::Parse {
                line: n + 1,
                message: format!("{v} is not in {{-1, 0, 1}}"),
            });
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(values)
}

pub fn read_sequence_values(path: &Path) -> Result<Vec<i8>> {
    parse_sequence(&fs::read_to_string(path)?)
}

/// Family and basic length implied by a sequence length. QRT lengths are
/// prime, so every multiple of six is read as DST.
pub fn infer_family(len: usize) -> (Family, usize) {
    if len % 6 == 0 {
        (Family::Dst, len / 6)
    } else {
        (Family::Qrt, len)
    }
}

/// Reads a sequence file and validates it against the inferred family.
pub fn load_sequence(path: &Path) -> Result<TernarySequence> {
    let values = read_sequence_values(path)?;
    let (family, basic) = infer_family(values.len());
    TernarySequence::new(values, family, basic)
}

// ----------------------------------------------------------- key=value files

/// `key = value` lines with `#` comments. Returns `(line, key, value)`.
pub fn parse_key_values(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: n + 1,
            message: "expected key=value".into(),
        })?;
        let key = k.trim().to_string();
        if out.iter().any(|(_, seen, _): &(usize, String, String)| *seen == key) {
            return Err(Error::Parse {
                line: n + 1,
                message: format!("duplicate key `{key}`"),
            });
        }
        out.push((n + 1, key, v.trim().to_string()));
    }
    Ok(out)
}

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid value `{value}` for `{key}`"),
    })
}

pub fn config_to_string(cfg: &MeasurementConfig) -> String {
    format!(
        "n_p = {}\namplitude_c = {}\nf_zoh = {}\nf_s = {}\nperiods_p = {}\n",
        cfg.n_p,
        fmt_f64(cfg.amplitude_c),
        fmt_f64(cfg.f_zoh),
        fmt_f64(cfg.f_s),
        cfg.periods_p
    )
}

/// Parses a measurement config. Missing keys take the reference values.
pub fn parse_config(text: &str) -> Result<MeasurementConfig> {
    let mut cfg = MeasurementConfig::reference();
    for (line, key, value) in parse_key_values(text)? {
        match key.as_str() {
            "n_p" => cfg.n_p = parse_value(line, &key, &value)?,
            "amplitude_c" => cfg.amplitude_c = parse_value(line, &key, &value)?,
            "f_zoh" => cfg.f_zoh = parse_value(line, &key, &value)?,
            "f_s" => cfg.f_s = parse_value(line, &key, &value)?,
            "periods_p" => cfg.periods_p = parse_value(line, &key, &value)?,
            _ => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown key `{key}`"),
                })
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_config(path: &Path) -> Result<MeasurementConfig> {
    parse_config(&fs::read_to_string(path)?)
}

/// Where a scenario's OCV curve came from.
#[derive(Debug, Clone, PartialEq)]
pub enum OcvSource {
    BuiltIn,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub scenario: SimScenario,
    pub ocv_source: OcvSource,
}

/// Parses a scenario. Missing keys default to the reference cell on the
/// built-in OCV curve at 20 % SOC, noise-free, state-space from rest with no
/// operating current. A relative `ocv_file` is resolved against `base_dir`.
pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<ScenarioFile> {
    let mut sc = SimScenario::quiet(SimMode::StateSpace);
    sc.ocv = OcvCurve::default_curve();
    sc.soc0 = 20.0;
    let p = EcmParams::reference();
    let (mut r0, mut r1, mut c1, mut r2, mut c2) = (p.r0, p.r1, p.c1, p.r2, p.c2);
    let (mut offset, mut slope) = (0.0, 0.0);
    let mut ocv_source = OcvSource::BuiltIn;
    for (line, key, value) in parse_key_values(text)? {
        let f = || parse_value::<f64>(line, &key, &value);
        match key.as_str() {
            "r0_ohm" => r0 = f()?,
            "r1_ohm" => r1 = f()?,
            "c1_farad" => c1 = f()?,
            "r2_ohm" => r2 = f()?,
            "c2_farad" => c2 = f()?,
            "soc0_pct" => sc.soc0 = f()?,
            "capacity_ah" => sc.capacity_ah = f()?,
            "sigma_v_volt" => sc.noise_sigma_v = f()?,
            "sigma_i_amp" => sc.noise_sigma_i = f()?,
            "i0_offset_a" => offset = f()?,
            "i0_slope_a_per_s" => slope = f()?,
            "quadratic_coeff" => sc.distortion.quadratic = f()?,
            "cubic_coeff" => sc.distortion.cubic = f()?,
            "seed" => sc.rng_seed = parse_value(line, &key, &value)?,
            "mode" => sc.mode = value.parse()?,
            "initial_state" => sc.initial_state = value.parse()?,
            "ocv_file" => {
                if !value.is_empty() {
                    let path = base_dir.join(&value);
                    sc.ocv = OcvCurve::from_csv(&path)?;
                    ocv_source = OcvSource::File(path);
                }
            }
            _ => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown key `{key}`"),
                })
            }
        }
    }
    sc.params = EcmParams::new(r0, r1, c1, r2, c2)?;
    sc.slow_current = match (offset, slope) {
        (o, s) if o == 0.0 && s == 0.0 => SlowCurrent::Zero,
        (o, s) if s == 0.0 => SlowCurrent::Constant(o),
        (offset, slope) => SlowCurrent::Linear { offset, slope },
    };
    sc.validate()?;
    Ok(ScenarioFile {
        scenario: sc,
        ocv_source,
    })
}

pub fn read_scenario(path: &Path) -> Result<ScenarioFile> {
    let base = path.parent().unwrap_or(Path::new("."));
    parse_scenario(&fs::read_to_string(path)?, base)
}

/// Serializes the parts of a scenario the file format can express.
pub fn scenario_to_string(sc: &SimScenario, ocv_file: Option<&Path>) -> String {
    let (offset, slope) = match sc.slow_current {
        SlowCurrent::Zero => (0.0, 0.0),
        SlowCurrent::Constant(c) => (c, 0.0),
        SlowCurrent::Linear { offset, slope } => (offset, slope),
        SlowCurrent::Sampled { .. } => (f64::NAN, f64::NAN),
    };
    let Distortion { quadratic, cubic } = sc.distortion;
    let mut out = String::new();
    let p = &sc.params;
    for (k, v) in [
        ("r0_ohm", p.r0),
        ("r1_ohm", p.r1),
        ("c1_farad", p.c1),
        ("r2_ohm", p.r2),
        ("c2_farad", p.c2),
        ("soc0_pct", sc.soc0),
        ("capacity_ah", sc.capacity_ah),
        ("sigma_v_volt", sc.noise_sigma_v),
        ("sigma_i_amp", sc.noise_sigma_i),
        ("i0_offset_a", offset),
        ("i0_slope_a_per_s", slope),
        ("quadratic_coeff", quadratic),
        ("cubic_coeff", cubic),
    ] {
        let _ = writeln!(out, "{k} = {}", fmt_f64(v));
    }
    let _ = writeln!(out, "seed = {}", sc.rng_seed);
    let _ = writeln!(out, "mode = {}", sc.mode.name());
    let _ = writeln!(out, "initial_state = {}", sc.initial_state.name());
    if let Some(path) = ocv_file {
        let _ = writeln!(out, "ocv_file = {}", path.display());
    }
    out
}

// ------------------------------------------------------------------ records

/// `t_s,i_A[,v_V]` rows with a header.
pub fn record_to_csv(record: &TimeSeriesRecord) -> String {
    let mut out = String::with_capacity(record.len() * 72);
    let voltage = record.voltage.as_deref();
    out.push_str(if voltage.is_some() {
        "t_s,i_A,v_V\n"
    } else {
        "t_s,i_A\n"
    });
    for (n, i) in record.current.iter().enumerate() {
        let _ = write!(out, "{:.16e},{i:.16e}", record.time(n));
        if let Some(v) = voltage {
            let _ = write!(out, ",{:.16e}", v[n]);
        }
        out.push('\n');
    }
    out
}

pub fn write_record(path: &Path, record: &TimeSeriesRecord) -> Result<()> {
    write_atomic(path, record_to_csv(record).as_bytes())
}

/// Reads a record CSV. The sampling rate is recovered from the time column
/// and snapped to an integer rate when within 1e-9 of one.
pub fn read_record(path: &Path) -> Result<TimeSeriesRecord> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let has_voltage = reader.headers()?.len() >= 3;
    let (mut t, mut i, mut v) = (Vec::new(), Vec::new(), Vec::new());
    for (n, row) in reader.records().enumerate() {
        let row = row?;
        let field = |j: usize| -> Result<f64> {
            row.get(j).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
                line: n + 2,
                message: format!("column {} is not a number", j + 1),
            })
        };
        t.push(field(0)?);
        i.push(field(1)?);
        if has_voltage {
            v.push(field(2)?);
        }
    }
    if t.len() < 2 {
        return Err(Error::InvalidConfig("a record needs at least two samples".into()));
    }
    let span = t[t.len() - 1] - t[0];
    if !(span > 0.0) {
        return Err(Error::InvalidConfig("time column must increase".into()));
    }
    let mut f_s = (t.len() - 1) as f64 / span;
    if (f_s - f_s.round()).abs() < 1e-9 * f_s {
        f_s = f_s.round();
    }
    TimeSeriesRecord::new(t[0], f_s, i, has_voltage.then_some(v))
}

// ------------------------------------------------------------------ spectra

/// `k,f_Hz,re,im,magnitude,phase_rad` for bins `0..=last` of `spectrum`,
/// with bin spacing `df` Hz.
pub fn spectrum_to_csv(spectrum: &ComplexSpectrum, df: f64, last: usize) -> String {
    let mut out = String::from("k,f_Hz,re,im,magnitude,phase_rad\n");
    for (k, z) in spectrum.bins().iter().enumerate().take(last + 1) {
        let _ = writeln!(
            out,
            "{k},{},{},{},{},{}",
            fmt_f64(k as f64 * df),
            fmt_f64(z.re),
            fmt_f64(z.im),
            fmt_f64(z.norm()),
            fmt_f64(z.arg())
        );
    }
    out
}

/// `k,f_hz,re_ohm,im_ohm,provenance`; dropped entries leave the value empty.
pub fn impedance_to_csv(spectrum: &ImpedanceSpectrum) -> String {
    let mut out = String::from("k,f_hz,re_ohm,im_ohm,provenance\n");
    for p in &spectrum.points {
        let (re, im) = match p.z {
            Some(z) => (fmt_f64(z.re), fmt_f64(z.im)),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(out, "{},{},{re},{im},{}", p.k, fmt_f64(p.freq_hz), p.provenance.name());
    }
    out
}

/// One parsed row of an impedance CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpedanceRow {
    pub k: usize,
    pub freq_hz: f64,
    pub z: Option<num_complex::Complex64>,
    pub provenance: Provenance,
}

pub fn parse_impedance_csv(text: &str) -> Result<Vec<ImpedanceRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (n, row) in reader.records().enumerate() {
        let row = row?;
        let bad = |what: &str| Error::Parse {
            line: n + 2,
            message: format!("bad {what}"),
        };
        let get = |j: usize| row.get(j).unwrap_or("");
        let k = get(0).parse().map_err(|_| bad("k"))?;
        let freq_hz = get(1).parse().map_err(|_| bad("f_hz"))?;
        let z = match (get(2), get(3)) {
            ("", "") => None,
            (re, im) => Some(num_complex::Complex64::new(
                re.parse().map_err(|_| bad("re_ohm"))?,
                im.parse().map_err(|_| bad("im_ohm"))?,
            )),
        };
        let provenance = get(4).parse()?;
        rows.push(ImpedanceRow {
            k,
            freq_hz,
            z,
            provenance,
        });
    }
    Ok(rows)
}

/// `k,f_hz,even_mag_v,odd_mag_v,noise_floor_v`, one row per excited harmonic.
/// A level that was skipped because of a collision is left empty. The noise
/// floor column repeats the median floor.
pub fn nonlinearity_to_csv(report: &NonlinearityReport) -> String {
    let mut ks: Vec<(usize, f64)> = report
        .even_level
        .iter()
        .chain(&report.odd_level)
        .map(|l| (l.k, l.freq_hz))
        .collect();
    ks.sort_by_key(|&(k, _)| k);
    ks.dedup_by_key(|&mut (k, _)| k);
    let find = |levels: &[crate::estimator::HarmonicLevel], k: usize| {
        levels
            .iter()
            .find(|l| l.k == k)
            .map(|l| fmt_f64(l.magnitude))
            .unwrap_or_default()
    };
    let mut out = String::from("k,f_hz,even_mag_v,odd_mag_v,noise_floor_v\n");
    let floor = fmt_f64(report.noise_floor.median);
    for (k, f) in ks {
        let _ = writeln!(
            out,
            "{k},{},{},{},{floor}",
            fmt_f64(f),
            find(&report.even_level, k),
            find(&report.odd_level, k)
        );
    }
    out
}
