//! Equivalent-circuit battery simulator: a series resistance and two parallel
//! RC branches on top of an SOC-dependent open-circuit voltage.
//!
//! Two modes are provided. `CircularLti` filters the current through `Z(ω)` on
//! the DFT grid, which yields a periodic, transient-free response. `StateSpace`
//! integrates both RC branches exactly sample by sample from a chosen initial
//! state, so start-up transients appear as they would on a real cell.
//!
//! Sampling convention: current sample `n` is the value held over
//! `[t_n - T_s/2, t_n + T_s/2)`. The state-space branch voltages are exact
//! for any current that is constant over those intervals, which includes every
//! zero-order-hold excitation with an integer oversampling ratio.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::excitation::TimeSeriesRecord;
use crate::spectral::{dft, idft_real, ComplexSpectrum};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcmParams {
    pub r0: f64,
    pub r1: f64,
    pub c1: f64,
    pub r2: f64,
    pub c2: f64,
}

/// Coefficients of `Z(s) = (b2 s² + b1 s + b0) / (a2 s² + a1 s + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RationalCoefficients {
    pub b2: f64,
    pub b1: f64,
    pub b0: f64,
    pub a2: f64,
    pub a1: f64,
}

impl EcmParams {
    pub fn new(r0: f64, r1: f64, c1: f64, r2: f64, c2: f64) -> Result<Self> {
        let p = Self { r0, r1, c1, r2, c2 };
        p.validate()?;
        Ok(p)
    }

    /// 5 mΩ series, 8 mΩ ‖ 0.1 F and 20 mΩ ‖ 1 F.
    pub fn reference() -> Self {
        Self {
            r0: 5e-3,
            r1: 8e-3,
            c1: 0.1,
            r2: 20e-3,
            c2: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.r0, self.r1, self.c1, self.r2, self.c2];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidConfig("ECM parameters must be strictly positive".into()));
        }
        Ok(())
    }

    pub fn coefficients(&self) -> RationalCoefficients {
        let Self { r0, r1, c1, r2, c2 } = *self;
        RationalCoefficients {
            b2: r0 * r1 * r2 * c1 * c2,
            b1: r1 * c1 * (r2 + r0) + r2 * c2 * (r1 + r0),
            b0: r0 + r1 + r2,
            a2: r1 * r2 * c1 * c2,
            a1: r1 * c1 + r2 * c2,
        }
    }

    pub fn tau1(&self) -> f64 {
        self.r1 * self.c1
    }

    pub fn tau2(&self) -> f64 {
        self.r2 * self.c2
    }
}

/// `Z(ω)` of the 2RC circuit evaluated in its rational form.
pub fn impedance_model(omega: f64, params: &EcmParams) -> Complex64 {
    let c = params.coefficients();
    let s = Complex64::new(0.0, omega);
    (c.b2 * s * s + c.b1 * s + c.b0) / (c.a2 * s * s + c.a1 * s + 1.0)
}

/// Monotone open-circuit-voltage curve, evaluated by shape-preserving cubic
/// Hermite interpolation (Fritsch–Carlson). Outside the grid the end segments
/// are extended linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct OcvCurve {
    soc: Vec<f64>,
    ocv: Vec<f64>,
    slopes: Vec<f64>,
}

// 21 points, 3.0 V empty to 4.2 V full, with a flat region around 25-50 %.
const DEFAULT_OCV: [f64; 21] = [
    3.000, 3.300, 3.450, 3.530, 3.580, 3.610, 3.630, 3.650, 3.670, 3.690, 3.710, 3.740, 3.780, 3.820, 3.870, 3.920,
    3.970, 4.020, 4.070, 4.130, 4.200,
];

impl OcvCurve {
    pub fn new(soc: Vec<f64>, ocv: Vec<f64>) -> Result<Self> {
        if soc.len() != ocv.len() || soc.len() < 2 {
            return Err(Error::InvalidConfig(
                "OCV curve needs at least two matching points".into(),
            ));
        }
        if soc.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig("OCV SOC grid must be strictly increasing".into()));
        }
        if ocv.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig("OCV must be strictly increasing in SOC".into()));
        }
        if soc[0] < 0.0 || soc[soc.len() - 1] > 100.0 {
            return Err(Error::InvalidConfig("OCV SOC grid must lie in [0, 100] %".into()));
        }
        let slopes = pchip_slopes(&soc, &ocv);
        Ok(Self { soc, ocv, slopes })
    }

    /// Built-in synthetic curve, 5 % grid from 0 to 100 %.
    pub fn default_curve() -> Self {
        let soc = (0..21).map(|i| 5.0 * i as f64).collect();
        Self::new(soc, DEFAULT_OCV.to_vec()).expect("built-in curve is valid")
    }

    /// Constant OCV of `volts` (drift-free).
    pub fn flat(volts: f64) -> Self {
        Self {
            soc: vec![0.0, 100.0],
            ocv: vec![volts, volts],
            slopes: vec![0.0, 0.0],
        }
    }

    /// Loads a `soc_pct,ocv_V` CSV (header optional).
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)?;
        let (mut soc, mut ocv) = (Vec::new(), Vec::new());
        for (i, row) in reader.records().enumerate() {
            let row = row?;
            let parse = |j: usize| row.get(j).and_then(|s| s.parse::<f64>().ok());
            match (parse(0), parse(1)) {
                (Some(s), Some(v)) => {
                    soc.push(s);
                    ocv.push(v);
                }
                // a non-numeric first row is a header
                _ if i == 0 => continue,
                _ => {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: "expected soc_pct,ocv_V".into(),
                    })
                }
            }
        }
        Self::new(soc, ocv)
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.soc.iter().copied().zip(self.ocv.iter().copied())
    }

    pub fn eval(&self, soc: f64) -> f64 {
        let n = self.soc.len();
        if soc <= self.soc[0] {
            return self.ocv[0] + self.slopes[0] * (soc - self.soc[0]);
        }
        if soc >= self.soc[n - 1] {
            return self.ocv[n - 1] + self.slopes[n - 1] * (soc - self.soc[n - 1]);
        }
        let i = self.soc.partition_point(|&s| s <= soc) - 1;
        let h = self.soc[i + 1] - self.soc[i];
        let t = (soc - self.soc[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ocv[i] + h10 * h * self.slopes[i] + h01 * self.ocv[i + 1] + h11 * h * self.slopes[i + 1]
    }
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s * d0 <= 0.0 {
            0.0
        } else if d0 * d1 < 0.0 && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

/// State of charge in % by trapezoidal integration of the current (A, positive
/// is charging) for a cell of `capacity_ah`. Values are not clamped.
pub fn soc_trajectory(current: &TimeSeriesRecord, soc0: f64, capacity_ah: f64) -> Vec<f64> {
    integrate_soc(&current.current, current.f_s, soc0, capacity_ah)
}

fn integrate_soc(current: &[f64], f_s: f64, soc0: f64, capacity_ah: f64) -> Vec<f64> {
    let gain = 100.0 / (3600.0 * capacity_ah) / f_s / 2.0;
    let mut soc = Vec::with_capacity(current.len());
    let mut acc = soc0;
    let mut prev = None;
    for &i in current {
        if let Some(p) = prev {
            acc += gain * (p + i);
        }
        soc.push(acc);
        prev = Some(i);
    }
    soc
}

/// Operating current on which the excitation is superimposed.
#[derive(Debug, Clone, PartialEq)]
pub enum SlowCurrent {
    Zero,
    Constant(f64),
    /// `offset + slope · t`, `t` in seconds on the excitation's time axis.
    Linear {
        offset: f64,
        slope: f64,
    },
    /// Sampled profile, must share the excitation's sampling rate.
    Sampled {
        t0: f64,
        f_s: f64,
        values: Vec<f64>,
    },
}

impl SlowCurrent {
    fn samples(&self, t0: f64, f_s: f64, n: usize) -> Result<Vec<f64>> {
        let t = |k: usize| t0 + k as f64 / f_s;
        Ok(match self {
            SlowCurrent::Zero => vec![0.0; n],
            SlowCurrent::Constant(c) => vec![*c; n],
            SlowCurrent::Linear { offset, slope } => (0..n).map(|k| offset + slope * t(k)).collect(),
            SlowCurrent::Sampled {
                t0: p0,
                f_s: pf,
                values,
            } => {
                if (pf - f_s).abs() > 1e-9 * f_s {
                    return Err(Error::SampleRateMismatch {
                        expected: f_s,
                        found: *pf,
                    });
                }
                let start = ((t0 - p0) * f_s).round();
                if start < 0.0 || start as usize + n > values.len() {
                    return Err(Error::Alignment(
                        "slow-current profile does not cover the excitation record".into(),
                    ));
                }
                values[start as usize..start as usize + n].to_vec()
            }
        })
    }

    /// Value at time `t` (sampled profiles use the nearest sample).
    pub fn at(&self, t: f64) -> f64 {
        match self {
            SlowCurrent::Zero => 0.0,
            SlowCurrent::Constant(c) => *c,
            SlowCurrent::Linear { offset, slope } => offset + slope * t,
            SlowCurrent::Sampled { t0, f_s, values } => {
                let k = ((t - t0) * f_s).round().max(0.0) as usize;
                values[k.min(values.len() - 1)]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    CircularLti,
    StateSpace,
}

impl std::str::FromStr for SimMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circular-lti" | "circular" => Ok(SimMode::CircularLti),
            "state-space" | "statespace" => Ok(SimMode::StateSpace),
            other => Err(Error::InvalidConfig(format!("unknown simulation mode `{other}`"))),
        }
    }
}

impl SimMode {
    pub fn name(self) -> &'static str {
        match self {
            SimMode::CircularLti => "circular-lti",
            SimMode::StateSpace => "state-space",
        }
    }
}

/// Branch voltages at the start of a state-space run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    /// Both RC branches discharged.
    Rest,
    /// Branches settled at `R_i · i_0(t_0)`, as after a long run at the
    /// initial slow current.
    SlowSteadyState,
}

impl std::str::FromStr for InitialState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rest" => Ok(InitialState::Rest),
            "slow-steady-state" | "steady" => Ok(InitialState::SlowSteadyState),
            other => Err(Error::InvalidConfig(format!("unknown initial state `{other}`"))),
        }
    }
}

impl InitialState {
    pub fn name(self) -> &'static str {
        match self {
            InitialState::Rest => "rest",
            InitialState::SlowSteadyState => "slow-steady-state",
        }
    }
}

/// Static polynomial distortion added to the voltage, acting on the RC-branch
/// overpotential `η` (volts): `quadratic · η² + cubic · η³`.
///
/// A polynomial in the ternary current itself would be degenerate, since
/// `u³ = u` and `u²` only has energy at multiples of six.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Distortion {
    pub quadratic: f64,
    pub cubic: f64,
}

impl Distortion {
    pub fn is_linear(&self) -> bool {
        self.quadratic == 0.0 && self.cubic == 0.0
    }

    fn apply(&self, eta: f64) -> f64 {
        eta * eta * (self.quadratic + self.cubic * eta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScenario {
    pub params: EcmParams,
    pub ocv: OcvCurve,
    pub soc0: f64,
    pub capacity_ah: f64,
    pub slow_current: SlowCurrent,
    pub noise_sigma_v: f64,
    pub noise_sigma_i: f64,
    pub rng_seed: u64,
    pub mode: SimMode,
    pub initial_state: InitialState,
    pub distortion: Distortion,
}

impl SimScenario {
    /// Noise-free, drift-free scenario with the reference cell.
    pub fn quiet(mode: SimMode) -> Self {
        Self {
            params: EcmParams::reference(),
            ocv: OcvCurve::flat(3.7),
            soc0: 50.0,
            capacity_ah: 5.0,
            slow_current: SlowCurrent::Zero,
            noise_sigma_v: 0.0,
            noise_sigma_i: 0.0,
            rng_seed: 0,
            mode,
            initial_state: InitialState::Rest,
            distortion: Distortion::default(),
        }
    }

    /// Charging validation scenario: 5 Ah cell at 20 % SOC on the built-in OCV
    /// curve, `i_0(t) = 2.5 - t / (2 t_p)`, 0.5 mV / 0.5 mA white noise.
    pub fn charging_reference(t_p: f64, seed: u64) -> Self {
        Self {
            params: EcmParams::reference(),
            ocv: OcvCurve::default_curve(),
            soc0: 20.0,
            capacity_ah: 5.0,
            slow_current: SlowCurrent::Linear {
                offset: 2.5,
                slope: -1.0 / (2.0 * t_p),
            },
            noise_sigma_v: 0.5e-3,
            noise_sigma_i: 0.5e-3,
            rng_seed: seed,
            mode: SimMode::StateSpace,
            initial_state: InitialState::SlowSteadyState,
            distortion: Distortion::default(),
        }
    }

    pub fn without_noise(mut self) -> Self {
        self.noise_sigma_i = 0.0;
        self.noise_sigma_v = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.capacity_ah > 0.0) {
            return Err(Error::InvalidConfig("capacity must be positive".into()));
        }
        if !(0.0..=100.0).contains(&self.soc0) {
            return Err(Error::InvalidConfig("soc0 must lie in [0, 100] %".into()));
        }
        if self.noise_sigma_v < 0.0 || self.noise_sigma_i < 0.0 {
            return Err(Error::InvalidConfig("noise deviations must be non-negative".into()));
        }
        Ok(())
    }
}

/// Simulates the cell voltage for `excitation` plus the scenario's slow
/// current. The returned record carries the (noisy) total current and voltage.
pub fn simulate_response(excitation: &TimeSeriesRecord, scenario: &SimScenario) -> Result<TimeSeriesRecord> {
    scenario.validate()?;
    if excitation.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = excitation.len();
    let f_s = excitation.f_s;
    let slow = scenario.slow_current.samples(excitation.t0, f_s, n)?;
    let current: Vec<f64> = slow.iter().zip(&excitation.current).map(|(a, b)| a + b).collect();

    let soc = integrate_soc(&current, f_s, scenario.soc0, scenario.capacity_ah);
    let soc_out_of_range = soc.iter().any(|s| !(0.0..=100.0).contains(s));

    let p = &scenario.params;
    let (ohmic, overpotential) = match scenario.mode {
        SimMode::CircularLti => circular_response(&current, f_s, p)?,
        SimMode::StateSpace => {
            let x0 = match scenario.initial_state {
                InitialState::Rest => 0.0,
                InitialState::SlowSteadyState => scenario.slow_current.at(excitation.t0),
            };
            let v1 = rc_branch_response(&current, f_s, p.r1, p.c1, p.r1 * x0);
            let v2 = rc_branch_response(&current, f_s, p.r2, p.c2, p.r2 * x0);
            let ohmic: Vec<f64> = current.iter().map(|i| p.r0 * i).collect();
            let eta = v1.iter().zip(&v2).map(|(a, b)| a + b).collect();
            (ohmic, eta)
        }
    };

    let mut voltage: Vec<f64> = (0..n)
        .map(|k| scenario.ocv.eval(soc[k]) + ohmic[k] + overpotential[k] + scenario.distortion.apply(overpotential[k]))
        .collect();
    let mut measured_current = current;

    if scenario.noise_sigma_v > 0.0 || scenario.noise_sigma_i > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.rng_seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        for k in 0..n {
            let nv: f64 = normal.sample(&mut rng);
            let ni: f64 = normal.sample(&mut rng);
            voltage[k] += scenario.noise_sigma_v * nv;
            measured_current[k] += scenario.noise_sigma_i * ni;
        }
    }

    let mut record = TimeSeriesRecord::new(excitation.t0, f_s, measured_current, Some(voltage))?;
    record.soc_out_of_range = soc_out_of_range;
    Ok(record)
}

/// Ohmic drop and RC-branch overpotential of a periodic (circular) response.
fn circular_response(current: &[f64], f_s: f64, p: &EcmParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = current.len();
    let spectrum = dft(current)?;
    let branch = |omega: f64| impedance_model(omega, p) - p.r0;
    let bins = spectrum
        .bins()
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            // negative frequencies for the upper half keep the result real
            let signed = if 2 * k <= n { k as f64 } else { k as f64 - n as f64 };
            i * branch(2.0 * PI * signed * f_s / n as f64)
        })
        .collect();
    let eta = idft_real(&ComplexSpectrum::from_bins(bins))?;
    let ohmic = current.iter().map(|i| p.r0 * i).collect();
    Ok((ohmic, eta))
}

/// Voltage across one parallel RC branch at every sample instant, for a
/// current held constant over each sample's centred interval. `v_init` is the
/// branch voltage half a sample before `t_0`.
pub fn rc_branch_response(current: &[f64], f_s: f64, r: f64, c: f64, v_init: f64) -> Vec<f64> {
    let half = (-0.5 / (f_s * r * c)).exp();
    let gain = r * (1.0 - half);
    let mut out = Vec::with_capacity(current.len());
    let mut v = v_init;
    let mut prev: Option<f64> = None;
    for &i in current {
        if let Some(ip) = prev {
            v = half * v + gain * ip;
        }
        v = half * v + gain * i;
        out.push(v);
        prev = Some(i);
    }
    out
}
