//! Zero-order-hold excitation synthesis and measurement design.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sequences::TernarySequence;
use crate::spectral::{dft, sampled_hold_transfer, ComplexSpectrum};

/// Relative slack used when checking that a ratio of rates is an integer.
const RATIO_TOLERANCE: f64 = 1e-9;

/// Measurement parameters: sequence length, amplitude, hold and sampling
/// rates, and the number of periods recorded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementConfig {
    pub n_p: usize,
    pub amplitude_c: f64,
    pub f_zoh: f64,
    pub f_s: f64,
    pub periods_p: usize,
}

impl MeasurementConfig {
    pub fn new(n_p: usize, amplitude_c: f64, f_zoh: f64, f_s: f64, periods_p: usize) -> Result<Self> {
        let cfg = Self {
            n_p,
            amplitude_c,
            f_zoh,
            f_s,
            periods_p,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// DST-10002 at 1 A, 1.5 kHz hold rate, 150 kHz sampling, one period.
    pub fn reference() -> Self {
        Self {
            n_p: 10002,
            amplitude_c: 1.0,
            f_zoh: 1500.0,
            f_s: 150_000.0,
            periods_p: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_p == 0 {
            return Err(Error::InvalidConfig("n_p must be positive".into()));
        }
        if self.periods_p == 0 {
            return Err(Error::InvalidConfig("periods_p must be positive".into()));
        }
        if !(self.f_zoh > 0.0 && self.f_zoh.is_finite()) || !(self.f_s > 0.0 && self.f_s.is_finite()) {
            return Err(Error::InvalidConfig("f_zoh and f_s must be positive".into()));
        }
        if !self.amplitude_c.is_finite() {
            return Err(Error::InvalidConfig("amplitude_c must be finite".into()));
        }
        self.oversampling()?;
        Ok(())
    }

    /// Integer ratio `f_s / f_zoh`.
    pub fn oversampling(&self) -> Result<usize> {
        let ratio = self.f_s / self.f_zoh;
        let rounded = ratio.round();
        if rounded < 1.0 || (ratio - rounded).abs() > RATIO_TOLERANCE * ratio {
            return Err(Error::InvalidConfig(format!(
                "f_s / f_zoh = {ratio} is not a positive integer"
            )));
        }
        Ok(rounded as usize)
    }

    pub fn with_periods(mut self, periods_p: usize) -> Self {
        self.periods_p = periods_p;
        self
    }

    pub fn with_amplitude(mut self, amplitude_c: f64) -> Self {
        self.amplitude_c = amplitude_c;
        self
    }

    pub fn t_zoh(&self) -> f64 {
        1.0 / self.f_zoh
    }

    pub fn t_s(&self) -> f64 {
        1.0 / self.f_s
    }

    /// Period of the excitation, `n_p / f_zoh`.
    pub fn t_p(&self) -> f64 {
        self.n_p as f64 / self.f_zoh
    }

    pub fn f_min(&self) -> f64 {
        self.f_zoh / self.n_p as f64
    }

    /// Upper edge of the usable band, two thirds of the hold rate.
    pub fn f_max(&self) -> f64 {
        2.0 * self.f_zoh / 3.0
    }

    pub fn samples_per_period(&self) -> usize {
        self.n_p * self.oversampling().expect("validated config")
    }

    pub fn n_samples(&self) -> usize {
        self.periods_p * self.samples_per_period()
    }

    /// Frequency of harmonic `k` of the period, `k / t_p`.
    pub fn harmonic_frequency(&self, k: usize) -> f64 {
        k as f64 * self.f_zoh / self.n_p as f64
    }

    /// Largest harmonic of `1/t_p` not above `f_max` (exact integer arithmetic).
    pub fn max_harmonic(&self) -> usize {
        // k f_zoh / n_p <= 2 f_zoh / 3  <=>  3k <= 2 n_p
        2 * self.n_p / 3
    }
}

/// Uniformly sampled current and (optionally) voltage.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesRecord {
    pub t0: f64,
    pub f_s: f64,
    pub current: Vec<f64>,
    pub voltage: Option<Vec<f64>>,
    /// Set when the simulated state of charge left `[0, 100] %`.
    pub soc_out_of_range: bool,
}

impl TimeSeriesRecord {
    pub fn new(t0: f64, f_s: f64, current: Vec<f64>, voltage: Option<Vec<f64>>) -> Result<Self> {
        if !(f_s > 0.0) {
            return Err(Error::InvalidConfig("sampling frequency must be positive".into()));
        }
        if let Some(v) = &voltage {
            if v.len() != current.len() {
                return Err(Error::Alignment(format!(
                    "current has {} samples, voltage {}",
                    current.len(),
                    v.len()
                )));
            }
        }
        Ok(Self {
            t0,
            f_s,
            current,
            voltage,
            soc_out_of_range: false,
        })
    }

    pub fn current_only(t0: f64, f_s: f64, current: Vec<f64>) -> Result<Self> {
        Self::new(t0, f_s, current, None)
    }

    /// Constant current lasting `n` samples.
    pub fn constant(value: f64, n: usize, f_s: f64) -> Result<Self> {
        Self::current_only(0.0, f_s, vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.current.is_empty()
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 / self.f_s
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.f_s
    }

    pub fn voltage(&self) -> Result<&[f64]> {
        self.voltage
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("record has no voltage channel".into()))
    }

    /// Samples `[start, start + len)` as a new record.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(Error::Alignment(format!(
                "window [{start}, {}) exceeds record of {} samples",
                start + len,
                self.len()
            )));
        }
        Ok(Self {
            t0: self.time(start),
            f_s: self.f_s,
            current: self.current[start..start + len].to_vec(),
            voltage: self.voltage.as_ref().map(|v| v[start..start + len].to_vec()),
            soc_out_of_range: self.soc_out_of_range,
        })
    }
}

/// Holds each sequence value for `f_s / f_zoh` samples, scales by the
/// amplitude and repeats for `periods_p` periods.
pub fn synthesize_excitation(seq: &TernarySequence, cfg: &MeasurementConfig) -> Result<TimeSeriesRecord> {
    let hold = check_against(seq, cfg)?;
    let one_period: Vec<f64> = seq
        .values()
        .iter()
        .flat_map(|&v| std::iter::repeat_n(cfg.amplitude_c * v as f64, hold))
        .collect();
    let current = one_period.repeat(cfg.periods_p);
    TimeSeriesRecord::current_only(0.0, cfg.f_s, current)
}

fn check_against(seq: &TernarySequence, cfg: &MeasurementConfig) -> Result<usize> {
    cfg.validate()?;
    if seq.len() != cfg.n_p {
        return Err(Error::InvalidConfig(format!(
            "sequence length {} differs from n_p = {}",
            seq.len(),
            cfg.n_p
        )));
    }
    cfg.oversampling()
}

/// Exact unitary spectrum of the synthesized excitation over all
/// `cfg.n_samples()` bins, built from the sequence DFT and the sampled hold
/// response rather than from a transform of the waveform.
///
/// Bin `P k` carries `√P · C · √M · U(k mod n_p) · H(k)` where `M` is the
/// oversampling ratio and `H` is [`sampled_hold_transfer`]; bins that are not
/// multiples of `P` are zero.
pub fn excitation_spectrum(seq: &TernarySequence, cfg: &MeasurementConfig) -> Result<ComplexSpectrum> {
    let m = check_against(seq, cfg)?;
    let u = dft(&seq.to_f64())?;
    let per_period = cfg.n_p * m;
    let p = cfg.periods_p;
    let gain = cfg.amplitude_c * (m as f64).sqrt() * (p as f64).sqrt();
    let mut bins = vec![Complex64::new(0.0, 0.0); per_period * p];
    for k in 0..per_period {
        let useq = u[k % cfg.n_p];
        if useq.norm() == 0.0 {
            continue;
        }
        bins[k * p] = useq * sampled_hold_transfer(k, cfg.n_p, m) * gain;
    }
    Ok(ComplexSpectrum::from_bins(bins))
}

/// Adds `burst` into `base` starting at the sample nearest `start_time`
/// (measured on the base record's time axis).
pub fn superimpose(base: &TimeSeriesRecord, burst: &TimeSeriesRecord, start_time: f64) -> Result<TimeSeriesRecord> {
    if (base.f_s - burst.f_s).abs() > RATIO_TOLERANCE * base.f_s {
        return Err(Error::SampleRateMismatch {
            expected: base.f_s,
            found: burst.f_s,
        });
    }
    let offset = ((start_time - base.t0) * base.f_s).round();
    if offset < 0.0 {
        return Err(Error::Alignment(format!(
            "burst starts before the record ({start_time} s)"
        )));
    }
    let start = offset as usize;
    if start + burst.len() > base.len() {
        return Err(Error::Alignment(format!(
            "burst of {} samples at sample {start} exceeds record of {} samples",
            burst.len(),
            base.len()
        )));
    }
    let mut out = base.clone();
    for (o, b) in out.current[start..start + burst.len()].iter_mut().zip(&burst.current) {
        *o += b;
    }
    Ok(out)
}

/// Start times of `count` bursts spaced `interval_s` apart, the first at
/// `first_s`, snapped to the sample grid of `f_s`.
pub fn burst_schedule(count: usize, interval_s: f64, first_s: f64, f_s: f64) -> Vec<f64> {
    (0..count)
        .map(|i| ((first_s + i as f64 * interval_s) * f_s).round() / f_s)
        .collect()
}
