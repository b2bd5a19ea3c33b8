//! Unitary DFT at arbitrary length, zero-order-hold transfer functions and
//! the repeated-signal spectrum identity.
//!
//! Every transform in this crate uses the unitary convention
//! `X(k) = N^{-1/2} Σ x(n) e^{-j2πkn/N}`. Estimators only use spectral ratios,
//! but the sequence eigenvector identities depend on this scaling.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::ops::Index;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Spectrum of a length-`N` signal under the unitary DFT.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    bins: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn from_bins(bins: Vec<Complex64>) -> Self {
        Self { bins }
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn into_bins(self) -> Vec<Complex64> {
        self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Sum of squared magnitudes; equals the time-domain energy.
    pub fn energy(&self) -> f64 {
        self.bins.iter().map(|b| b.norm_sqr()).sum()
    }

    /// Largest bin magnitude.
    pub fn peak(&self) -> f64 {
        self.bins.iter().map(|b| b.norm()).fold(0.0, f64::max)
    }
}

impl Index<usize> for ComplexSpectrum {
    type Output = Complex64;

    fn index(&self, k: usize) -> &Complex64 {
        &self.bins[k]
    }
}

fn transform_in_place(buf: &mut [Complex64], direction: FftDirection) {
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft(buf.len(), direction));
    fft.process(buf);
    let scale = 1.0 / (buf.len() as f64).sqrt();
    for b in buf.iter_mut() {
        *b *= scale;
    }
}

/// Unitary forward DFT of a real signal.
pub fn dft(x: &[f64]) -> Result<ComplexSpectrum> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform_in_place(&mut buf, FftDirection::Forward);
    Ok(ComplexSpectrum { bins: buf })
}

/// Unitary forward DFT of a complex signal.
pub fn dft_complex(x: &[Complex64]) -> Result<ComplexSpectrum> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut buf = x.to_vec();
    transform_in_place(&mut buf, FftDirection::Forward);
    Ok(ComplexSpectrum { bins: buf })
}

/// Unitary inverse DFT.
pub fn idft(spectrum: &ComplexSpectrum) -> Result<Vec<Complex64>> {
    if spectrum.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut buf = spectrum.bins.clone();
    transform_in_place(&mut buf, FftDirection::Inverse);
    Ok(buf)
}

/// Inverse DFT keeping only the real part of the result.
pub fn idft_real(spectrum: &ComplexSpectrum) -> Result<Vec<f64>> {
    Ok(idft(spectrum)?.into_iter().map(|c| c.re).collect())
}

/// `sin(x)/x` with the removable singularity at zero filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        // Taylor series; the truncation error is below 1e-17 here.
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Continuous-time zero-order-hold response `e^{-jωT/2} sinc(ωT/2)`.
pub fn zoh_transfer(omega: f64, t_zoh: f64) -> Complex64 {
    let half = omega * t_zoh / 2.0;
    Complex64::from_polar(1.0, -half) * sinc(half)
}

/// Hold response seen on a sampled grid: each of `n_p` sequence values is held
/// for `oversampling` samples and the result is observed at DFT bin `k` of one
/// period (length `n_p * oversampling`).
///
/// Normalized so that it tends to [`zoh_transfer`] at `ω = 2πk/T_p` as the
/// oversampling ratio grows. Unlike the continuous response it is exact for
/// the sampled waveform, aliasing included.
pub fn sampled_hold_transfer(k: usize, n_p: usize, oversampling: usize) -> Complex64 {
    let n = n_p * oversampling;
    let m = oversampling as f64;
    let k_mod = k % n;
    if k_mod == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let x = PI * k_mod as f64 / n as f64;
    let num = (PI * (k_mod % (2 * n_p)) as f64 / n_p as f64).sin();
    let phase = Complex64::from_polar(1.0, -x * (m - 1.0));
    phase * (num / (m * x.sin()))
}

/// Spectrum of a signal repeated `p` times, built from the spectrum of one copy.
///
/// Bins at multiples of `p` carry `√p·U(k/p)`; every other bin is zero.
pub fn repeated_spectrum(single: &ComplexSpectrum, p: usize) -> ComplexSpectrum {
    let n = single.len();
    let mut bins = vec![Complex64::new(0.0, 0.0); n * p];
    let gain = (p as f64).sqrt();
    for (k, &u) in single.bins.iter().enumerate() {
        bins[k * p] = u * gain;
    }
    ComplexSpectrum { bins }
}
