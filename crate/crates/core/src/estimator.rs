//! Impedance estimation from sampled current and voltage.
//!
//! * [`steady_state_impedance`]: plain spectral division after discarding
//!   start-up periods.
//! * [`nonlinearity_levels`]: even and odd distortion read at the suppressed
//!   harmonics `2k` and `3k` of a DST excitation.
//! * [`operando_reconstruct`]: single-period estimate with drift and
//!   transients suppressed. The excited harmonics split into `K+` and `K-`,
//!   where the excitation has opposite sign. The ratios measured on each set
//!   act like two experiments with `±i_exc`. Each one is interpolated onto
//!   the other set and the two are combined as
//!   `Z = (Z+ + Z-)/2 + I0/(2 Ĩ) · (Z+ - Z-)`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::excitation::{excitation_spectrum, synthesize_excitation, MeasurementConfig, TimeSeriesRecord};
use crate::sequences::{harmonic_sets, Family, HarmonicSets, TernarySequence};
use crate::spectral::{dft, sampled_hold_transfer, ComplexSpectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Measured,
    Interpolated,
    Dropped,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Measured => "measured",
            Provenance::Interpolated => "interpolated",
            Provenance::Dropped => "dropped",
        }
    }
}

impl std::str::FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "measured" => Ok(Provenance::Measured),
            "interpolated" => Ok(Provenance::Interpolated),
            "dropped" => Ok(Provenance::Dropped),
            other => Err(Error::InvalidConfig(format!("unknown provenance `{other}`"))),
        }
    }
}

/// One harmonic of an impedance estimate. `k` is the DFT bin of the analysed
/// window. Dropped points carry no value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpedancePoint {
    pub k: usize,
    pub freq_hz: f64,
    pub z: Option<Complex64>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpedanceSpectrum {
    pub points: Vec<ImpedancePoint>,
    pub family: Family,
    pub config: MeasurementConfig,
}

impl ImpedanceSpectrum {
    pub fn get(&self, k: usize) -> Option<&ImpedancePoint> {
        self.points
            .binary_search_by_key(&k, |p| p.k)
            .ok()
            .map(|i| &self.points[i])
    }

    /// Value at bin `k`, if present and not dropped.
    pub fn value(&self, k: usize) -> Option<Complex64> {
        self.get(k).and_then(|p| p.z)
    }

    /// Points that carry a value.
    pub fn kept(&self) -> impl Iterator<Item = &ImpedancePoint> {
        self.points.iter().filter(|p| p.z.is_some())
    }

    pub fn first_kept(&self) -> Option<&ImpedancePoint> {
        self.kept().next()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn check_inputs(record: &TimeSeriesRecord, seq: &TernarySequence, cfg: &MeasurementConfig) -> Result<usize> {
    cfg.validate()?;
    if seq.len() != cfg.n_p {
        return Err(Error::InvalidConfig(format!(
            "sequence length {} differs from n_p = {}",
            seq.len(),
            cfg.n_p
        )));
    }
    if (record.f_s - cfg.f_s).abs() > 1e-9 * cfg.f_s {
        return Err(Error::SampleRateMismatch {
            expected: cfg.f_s,
            found: record.f_s,
        });
    }
    record.voltage()?;
    let spp = cfg.samples_per_period();
    if record.len() % spp != 0 || record.is_empty() {
        return Err(Error::Alignment(format!(
            "record of {} samples is not a whole number of {spp}-sample periods",
            record.len()
        )));
    }
    Ok(record.len() / spp)
}

/// `V(k)/I(k)` at the excited harmonics up to `f_max`, using the last
/// `periods - discard_periods` periods of the record.
pub fn steady_state_impedance(
    record: &TimeSeriesRecord,
    seq: &TernarySequence,
    cfg: &MeasurementConfig,
    discard_periods: usize,
) -> Result<ImpedanceSpectrum> {
    let periods = check_inputs(record, seq, cfg)?;
    if periods < discard_periods + 1 {
        return Err(Error::TooFewPeriods {
            available: periods,
            required: discard_periods + 1,
        });
    }
    let spp = cfg.samples_per_period();
    let kept_periods = periods - discard_periods;
    let window = record.window(discard_periods * spp, kept_periods * spp)?;
    let v = dft(window.voltage()?)?;
    let i = dft(&window.current)?;

    let sets = harmonic_sets(seq);
    let k_max = cfg.max_harmonic();
    let points = sets
        .k_all
        .iter()
        .filter(|&&k| k <= k_max)
        .map(|&k| {
            let bin = kept_periods * k;
            ImpedancePoint {
                k: bin,
                freq_hz: cfg.harmonic_frequency(k),
                z: Some(v[bin] / i[bin]),
                provenance: Provenance::Measured,
            }
        })
        .collect();
    Ok(ImpedanceSpectrum {
        points,
        family: seq.family(),
        config: cfg.with_periods(kept_periods),
    })
}

/// Magnitude of a voltage Fourier coefficient (volts) at one bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicLevel {
    /// Excited harmonic the reading belongs to (bin of the record).
    pub k: usize,
    /// Bin that was read (`2k` or `3k` modulo the record length).
    pub bin: usize,
    pub freq_hz: f64,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseFloor {
    pub median: f64,
    pub rms: f64,
    pub bins: usize,
}

/// Even (`2k`) and odd (`3k`) distortion levels next to the noise floor.
///
/// Magnitudes are Fourier-coefficient amplitudes in volts, i.e. the unitary
/// DFT divided by `√N`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearityReport {
    pub even_level: Vec<HarmonicLevel>,
    pub odd_level: Vec<HarmonicLevel>,
    pub noise_floor: NoiseFloor,
}

impl NonlinearityReport {
    pub fn even_rms(&self) -> f64 {
        rms(self.even_level.iter().map(|l| l.magnitude))
    }

    pub fn odd_rms(&self) -> f64 {
        rms(self.odd_level.iter().map(|l| l.magnitude))
    }
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Reads the voltage spectrum at `2k` and `3k` for every excited `k` up to
/// `f_max`. Bins that coincide with an excited harmonic (or its images above
/// the hold rate) are skipped. The noise floor covers every other bin from 1
/// to `3 k_max`.
pub fn nonlinearity_levels(
    record: &TimeSeriesRecord,
    seq: &TernarySequence,
    cfg: &MeasurementConfig,
) -> Result<NonlinearityReport> {
    if seq.family() != Family::Dst {
        return Err(Error::UnsupportedSequence(
            "distortion readout needs a DST excitation (QRT excites every harmonic)".into(),
        ));
    }
    let periods = check_inputs(record, seq, cfg)?;
    let n = record.len();
    let v = dft(record.voltage()?)?;
    let scale = 1.0 / (n as f64).sqrt();
    let sets = harmonic_sets(seq);
    let excited = |bin: usize| bin % periods == 0 && sets.contains((bin / periods) % cfg.n_p);

    let k_max = cfg.max_harmonic();
    let mut read = vec![false; n];
    let mut even_level = Vec::new();
    let mut odd_level = Vec::new();
    for &k in sets.k_all.iter().filter(|&&k| k <= k_max) {
        let bin_k = periods * k;
        for (order, dest) in [(2usize, &mut even_level), (3, &mut odd_level)] {
            let bin = (order * bin_k) % n;
            if bin == 0 || excited(bin) {
                continue;
            }
            read[bin] = true;
            dest.push(HarmonicLevel {
                k: bin_k,
                bin,
                freq_hz: cfg.harmonic_frequency(k),
                magnitude: v[bin].norm() * scale,
            });
        }
    }

    let top = (3 * periods * k_max).min(n / 2);
    let floor: Vec<f64> = (1..=top)
        .filter(|&b| !excited(b) && !read[b])
        .map(|b| v[b].norm() * scale)
        .collect();
    let noise_floor = NoiseFloor {
        median: median(floor.clone()),
        rms: rms(floor.iter().copied()),
        bins: floor.len(),
    };
    Ok(NonlinearityReport {
        even_level,
        odd_level,
        noise_floor,
    })
}

/// Measured current minus the known excitation waveform: an estimate of the
/// operating current `i_0(t)` (plus current noise).
pub fn recover_slow_current(
    record: &TimeSeriesRecord,
    seq: &TernarySequence,
    cfg: &MeasurementConfig,
) -> Result<TimeSeriesRecord> {
    let excitation = synthesize_excitation(seq, cfg)?;
    if (record.f_s - cfg.f_s).abs() > 1e-9 * cfg.f_s {
        return Err(Error::SampleRateMismatch {
            expected: cfg.f_s,
            found: record.f_s,
        });
    }
    if excitation.len() != record.len() {
        return Err(Error::Alignment(format!(
            "record has {} samples, excitation {}",
            record.len(),
            excitation.len()
        )));
    }
    let current = record
        .current
        .iter()
        .zip(&excitation.current)
        .map(|(i, e)| i - e)
        .collect();
    TimeSeriesRecord::current_only(record.t0, record.f_s, current)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    #[default]
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperandoOptions {
    /// Take `Ĩ(k)` on `K-` from the exact excitation spectrum, which carries
    /// the hold response, instead of interpolating it from `K+`.
    pub zoh_correction: bool,
    pub interpolation: Interpolation,
    /// Harmonics with `|I(k)|` below this fraction of the median excited-bin
    /// magnitude are dropped instead of divided.
    pub current_floor: f64,
}

impl Default for OperandoOptions {
    fn default() -> Self {
        Self {
            zoh_correction: false,
            interpolation: Interpolation::Linear,
            current_floor: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperandoResult {
    /// Drift- and transient-suppressed estimate.
    pub reconstructed: ImpedanceSpectrum,
    /// Plain `V(k)/I(k)` at every excited harmonic in band.
    pub naive: ImpedanceSpectrum,
    /// Measured on `K+`, interpolated on `K-`.
    pub z_plus: ImpedanceSpectrum,
    /// Measured on `K-`, interpolated on `K+`.
    pub z_minus: ImpedanceSpectrum,
    /// Widest index gap between the two neighbours used for any kept harmonic.
    pub max_partner_gap: usize,
}

/// Linear interpolation of `(index, value)` samples, sorted by index.
/// Returns the value and the width of the bracketing gap.
fn interpolate(samples: &[(usize, Complex64)], k: usize) -> Option<(Complex64, usize)> {
    let j = samples.partition_point(|&(x, _)| x < k);
    if j < samples.len() && samples[j].0 == k {
        return Some((samples[j].1, 0));
    }
    if j == 0 || j == samples.len() {
        return None;
    }
    let (x0, y0) = samples[j - 1];
    let (x1, y1) = samples[j];
    let t = (k - x0) as f64 / (x1 - x0) as f64;
    Some((y0 + (y1 - y0) * t, x1 - x0))
}

/// Single-period operando impedance with drift and transient suppression.
pub fn operando_reconstruct(
    record: &TimeSeriesRecord,
    seq: &TernarySequence,
    cfg: &MeasurementConfig,
    options: &OperandoOptions,
) -> Result<OperandoResult> {
    if cfg.periods_p != 1 {
        return Err(Error::MultiPeriod(cfg.periods_p));
    }
    let periods = match check_inputs(record, seq, cfg) {
        Err(Error::Alignment(_)) if record.len() > cfg.samples_per_period() => {
            return Err(Error::MultiPeriod(record.len() / cfg.samples_per_period()))
        }
        other => other?,
    };
    if periods != 1 {
        return Err(Error::MultiPeriod(periods));
    }
    let sets = harmonic_sets(seq);
    if sets.k_plus.is_empty() || sets.k_minus.is_empty() {
        return Err(Error::UnsupportedSequence(
            "sequence lacks sign-partner harmonics".into(),
        ));
    }

    let slow = recover_slow_current(record, seq, cfg)?;
    let v = dft(record.voltage()?)?;
    let i = dft(&record.current)?;
    let i0 = dft(&slow.current)?;
    let i_exc = excitation_spectrum(seq, cfg)?;

    let k_max = cfg.max_harmonic();
    let in_band: Vec<usize> = sets.k_all.iter().copied().filter(|&k| k <= k_max).collect();
    let floor = options.current_floor * median(in_band.iter().map(|&k| i[k].norm()).collect());
    let usable = |k: usize| i[k].norm() >= floor;

    // Ĩ: the excitation as it appears on K+, continued onto K-.
    let plus_exc: Vec<(usize, Complex64)> = sets.k_plus.iter().map(|&k| (k, i_exc[k])).collect();
    let i_tilde = |k: usize| -> Option<Complex64> {
        if sets.is_plus(k) {
            Some(i_exc[k])
        } else if options.zoh_correction {
            Some(-i_exc[k])
        } else {
            interpolate(&plus_exc, k).map(|(z, _)| z)
        }
    };

    let source = |set: &[usize]| -> Vec<(usize, Complex64)> {
        set.iter()
            .copied()
            .filter(|&k| usable(k))
            .map(|k| (k, v[k] / i[k]))
            .collect()
    };
    let plus_src = source(&sets.k_plus);
    let minus_src = source(&sets.k_minus);

    // Value of one branch at k: measured on its own set, interpolated elsewhere.
    let branch = |k: usize, own: &[(usize, Complex64)]| -> Option<(Complex64, usize, bool)> {
        let (z, gap) = interpolate(own, k)?;
        Some((z, gap, gap == 0))
    };

    let lo = sets.interpolation_floor().unwrap_or(0);
    let hi = sets.interpolation_ceiling().unwrap_or(0).min(k_max);

    let mut reconstructed = Vec::with_capacity(in_band.len());
    let mut naive = Vec::with_capacity(in_band.len());
    let mut z_plus = Vec::with_capacity(in_band.len());
    let mut z_minus = Vec::with_capacity(in_band.len());
    let mut max_partner_gap = 0;

    let dropped = |k: usize| ImpedancePoint {
        k,
        freq_hz: cfg.harmonic_frequency(k),
        z: None,
        provenance: Provenance::Dropped,
    };
    let point = |k: usize, z: Complex64, provenance| ImpedancePoint {
        k,
        freq_hz: cfg.harmonic_frequency(k),
        z: Some(z),
        provenance,
    };
    let branch_point = |k: usize, b: Option<(Complex64, usize, bool)>| match b {
        Some((z, _, true)) => point(k, z, Provenance::Measured),
        Some((z, _, false)) => point(k, z, Provenance::Interpolated),
        None => dropped(k),
    };

    for &k in &in_band {
        if !usable(k) {
            naive.push(dropped(k));
            z_plus.push(dropped(k));
            z_minus.push(dropped(k));
            reconstructed.push(dropped(k));
            continue;
        }
        naive.push(point(k, v[k] / i[k], Provenance::Measured));
        let bp = branch(k, &plus_src);
        let bm = branch(k, &minus_src);
        z_plus.push(branch_point(k, bp));
        z_minus.push(branch_point(k, bm));

        let combined = match (bp, bm, i_tilde(k)) {
            (Some((zp, gp, _)), Some((zm, gm, _)), Some(it)) if k >= lo && k <= hi => {
                max_partner_gap = max_partner_gap.max(gp).max(gm);
                Some((zp + zm) * 0.5 + i0[k] / (it * 2.0) * (zp - zm))
            }
            _ => None,
        };
        reconstructed.push(match combined {
            Some(z) => point(k, z, Provenance::Measured),
            None => dropped(k),
        });
    }

    let wrap = |points| ImpedanceSpectrum {
        points,
        family: seq.family(),
        config: *cfg,
    };
    Ok(OperandoResult {
        reconstructed: wrap(reconstructed),
        naive: wrap(naive),
        z_plus: wrap(z_plus),
        z_minus: wrap(z_minus),
        max_partner_gap,
    })
}

/// Combines two experiments run with `+i_exc` and `-i_exc` under identical
/// conditions: `Z = (Z+ + Z-)/2 + I0/(2 I_exc) · (Z+ - Z-)`, applied per
/// harmonic. `i0` and `i_exc` are indexed by the spectra's bins.
pub fn repeated_experiment_combine(
    z_plus: &ImpedanceSpectrum,
    z_minus: &ImpedanceSpectrum,
    i0: &ComplexSpectrum,
    i_exc: &ComplexSpectrum,
) -> Result<ImpedanceSpectrum> {
    if z_plus.len() != z_minus.len() || z_plus.points.iter().zip(&z_minus.points).any(|(a, b)| a.k != b.k) {
        return Err(Error::GridMismatch("Z+ and Z- use different harmonics".into()));
    }
    let top = z_plus.points.last().map_or(0, |p| p.k);
    if top >= i0.len() || top >= i_exc.len() {
        return Err(Error::GridMismatch(
            "current spectra are shorter than the harmonic grid".into(),
        ));
    }
    let points = z_plus
        .points
        .iter()
        .zip(&z_minus.points)
        .map(|(p, m)| {
            let z = match (p.z, m.z) {
                (Some(zp), Some(zm)) => Some((zp + zm) * 0.5 + i0[p.k] / (i_exc[p.k] * 2.0) * (zp - zm)),
                _ => None,
            };
            ImpedancePoint {
                k: p.k,
                freq_hz: p.freq_hz,
                z,
                provenance: if z.is_some() {
                    Provenance::Measured
                } else {
                    Provenance::Dropped
                },
            }
        })
        .collect();
    Ok(ImpedanceSpectrum {
        points,
        family: z_plus.family,
        config: z_plus.config,
    })
}

/// Deviation of `I(k+)/I(k-)` from its assumed value for each in-band `k+` and
/// its nearest `k-`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartnerResidual {
    pub k_plus: usize,
    pub k_minus: usize,
    pub residual: f64,
}

/// Without correction the partners are assumed to satisfy `I(k+) = -I(k-)`.
/// With correction the assumed ratio is `-H(k+)/H(k-)`, `H` being the sampled
/// hold response.
pub fn partner_ratio_residuals(
    seq: &TernarySequence,
    cfg: &MeasurementConfig,
    zoh_correction: bool,
) -> Result<Vec<PartnerResidual>> {
    let spectrum = excitation_spectrum(seq, &cfg.with_periods(1))?;
    let m = cfg.oversampling()?;
    let sets: HarmonicSets = harmonic_sets(seq);
    let k_max = cfg.max_harmonic();
    Ok(sets
        .k_plus
        .iter()
        .copied()
        .filter(|&k| k <= k_max)
        .filter_map(|kp| {
            let km = *sets.k_minus.iter().min_by_key(|&&km| km.abs_diff(kp))?;
            let ratio = spectrum[kp] / spectrum[km];
            let expected = if zoh_correction {
                -sampled_hold_transfer(kp, cfg.n_p, m) / sampled_hold_transfer(km, cfg.n_p, m)
            } else {
                Complex64::new(-1.0, 0.0)
            };
            Some(PartnerResidual {
                k_plus: kp,
                k_minus: km,
                residual: (ratio - expected).norm(),
            })
        })
        .collect())
}
