//! Quadratic-residue ternary (QRT) and direct-synthesis ternary (DST)
//! sequences.
//!
//! A QRT sequence of odd prime length `N` carries the Legendre symbol of each
//! index: `0` at `n = 0`, `+1` where `n` is a nonzero square modulo `N` and
//! `-1` elsewhere. Under the unitary DFT it is an eigenvector, `U(k) = λ u(k)`,
//! with `λ` one of `1, -1, j, -j`.
//!
//! A DST sequence multiplies the six-sample special sequence
//! `[0, -1, -1, 0, 1, 1]` (repeated `N_basic` times) by the basic QRT sequence
//! (repeated six times). Its spectrum vanishes at every index that is even or a
//! multiple of three, so second- and third-order distortion of an excited
//! harmonic never lands on another excited harmonic. At the excited indices it
//! still satisfies `U(k) = λ_DST u(k)` with `|λ_DST| = √2`.
//!
//! Both families split their excited harmonics into `K+` (time-domain value
//! `+1` at that index) and `K-` (value `-1`), and the spectrum takes opposite
//! values on the two sets. The operando estimator relies on that sign split.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::dft;

/// The six-sample sequence multiplied into every DST sequence.
pub const SPECIAL_SEQUENCE: [i8; 6] = [0, -1, -1, 0, 1, 1];

/// Default absolute tolerance for eigenvector checks.
pub const EIGEN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Qrt,
    Dst,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Qrt => "qrt",
            Family::Dst => "dst",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qrt" => Ok(Family::Qrt),
            "dst" => Ok(Family::Dst),
            other => Err(Error::InvalidConfig(format!("unknown sequence family `{other}`"))),
        }
    }
}

/// A periodic ternary sequence with its family metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TernarySequence {
    values: Vec<i8>,
    family: Family,
    basic_length: usize,
}

impl TernarySequence {
    /// Wraps `values`, checking every structural invariant of `family`.
    ///
    /// For QRT, `basic_length` must equal the length. For DST it is the length
    /// of the basic QRT sequence, so `values.len() == 6 * basic_length`.
    pub fn new(values: Vec<i8>, family: Family, basic_length: usize) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !(-1..=1).contains(v)) {
            return Err(Error::InvalidSequence(format!(
                "entry {pos} = {} is not in {{-1, 0, 1}}",
                values[pos]
            )));
        }
        let n = values.len();
        match family {
            Family::Qrt => {
                if basic_length != n {
                    return Err(Error::InvalidSequence(format!(
                        "QRT basic length {basic_length} differs from length {n}"
                    )));
                }
                check_qrt_length(n)?;
                let zeros = values.iter().filter(|&&v| v == 0).count();
                if values[0] != 0 || zeros != 1 {
                    return Err(Error::InvalidSequence(
                        "QRT must have exactly one zero, at index 0".into(),
                    ));
                }
                let plus = values.iter().filter(|&&v| v == 1).count();
                if plus != (n - 1) / 2 {
                    return Err(Error::InvalidSequence(format!(
                        "QRT of length {n} must have {} entries equal to +1, found {plus}",
                        (n - 1) / 2
                    )));
                }
            }
            Family::Dst => {
                check_dst_basic_length(basic_length)?;
                if n != 6 * basic_length {
                    return Err(Error::InvalidSequence(format!(
                        "DST length {n} is not 6 x basic length {basic_length}"
                    )));
                }
            }
        }
        Ok(Self {
            values,
            family,
            basic_length,
        })
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn basic_length(&self) -> usize {
        self.basic_length
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }
}

/// Deterministic primality by trial division.
///
/// Exact for every input; performance is fine up to the ~10^10 range. All
/// lengths used for impedance excitation are far below that.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n < 4 {
        return true;
    }
    if n % 2 == 0 || n % 3 == 0 {
        return false;
    }
    let mut d = 5u64;
    while d * d <= n {
        if n % d == 0 || n % (d + 2) == 0 {
            return false;
        }
        d += 6;
    }
    true
}

/// Whether `n` can be the length of a QRT sequence.
///
/// QRT lengths are odd primes of the form `4z ± 1`. Every odd prime has that
/// form, so primality and oddness are the whole condition.
pub fn is_valid_qrt_length(n: usize) -> bool {
    n % 2 == 1 && is_prime(n as u64)
}

fn check_qrt_length(n: usize) -> Result<()> {
    if n % 2 == 0 {
        return Err(Error::InvalidLength {
            length: n,
            reason: "QRT length must be odd".into(),
        });
    }
    if !is_prime(n as u64) {
        return Err(Error::InvalidLength {
            length: n,
            reason: "QRT length must be prime".into(),
        });
    }
    Ok(())
}

/// Whether `n` is an admissible DST basic length, i.e. `5 + 6p` or `7 + 6p`.
pub fn is_valid_dst_basic_length(n: usize) -> bool {
    n >= 5 && (n % 6 == 1 || n % 6 == 5)
}

fn check_dst_basic_length(n: usize) -> Result<()> {
    if !is_valid_dst_basic_length(n) {
        return Err(Error::InvalidLength {
            length: n,
            reason: "DST basic length must be 5 + 6p or 7 + 6p".into(),
        });
    }
    Ok(())
}

/// Generates the QRT sequence of length `n`.
pub fn generate_qrt(n: usize) -> Result<TernarySequence> {
    check_qrt_length(n)?;
    let mut values = vec![-1i8; n];
    values[0] = 0;
    for i in 1..n {
        values[(i * i) % n] = 1;
    }
    TernarySequence::new(values, Family::Qrt, n)
}

/// Builds the DST sequence from a QRT basic sequence.
pub fn generate_dst(basic: &TernarySequence) -> Result<TernarySequence> {
    if basic.family() != Family::Qrt {
        return Err(Error::UnsupportedSequence(
            "DST basic sequence must be a QRT sequence".into(),
        ));
    }
    let nb = basic.len();
    check_dst_basic_length(nb)?;
    let values = (0..6 * nb)
        .map(|n| SPECIAL_SEQUENCE[n % 6] * basic.values()[n % nb])
        .collect();
    TernarySequence::new(values, Family::Dst, nb)
}

/// `u_QRT(6 mod N)`, the value of the basic sequence at the special
/// sequence's length.
///
/// This is not the sign that links the two eigenvalues; see
/// [`dst_eigenvalue_factor`].
pub fn r_factor(basic: &TernarySequence) -> Result<i8> {
    if basic.family() != Family::Qrt {
        return Err(Error::UnsupportedSequence("r factor is defined for QRT only".into()));
    }
    Ok(basic.values()[6 % basic.len()])
}

/// The sign `s = -u_QRT(N - 2)` (minus the Legendre symbol of -2) with
/// `λ_DST = j√2·s·λ_QRT`.
pub fn dst_eigenvalue_factor(basic: &TernarySequence) -> Result<i8> {
    if basic.family() != Family::Qrt {
        return Err(Error::UnsupportedSequence(
            "eigenvalue factor is defined for QRT only".into(),
        ));
    }
    Ok(-basic.values()[basic.len() - 2])
}

/// Excited-harmonic index sets. All three are sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HarmonicSets {
    pub k_plus: Vec<usize>,
    pub k_minus: Vec<usize>,
    pub k_all: Vec<usize>,
}

impl HarmonicSets {
    pub fn contains(&self, k: usize) -> bool {
        self.k_all.binary_search(&k).is_ok()
    }

    pub fn is_plus(&self, k: usize) -> bool {
        self.k_plus.binary_search(&k).is_ok()
    }

    pub fn is_minus(&self, k: usize) -> bool {
        self.k_minus.binary_search(&k).is_ok()
    }

    /// Lowest index at which both a `K+` and a `K-` neighbour exist at or below.
    pub fn interpolation_floor(&self) -> Option<usize> {
        Some(*self.k_plus.first()?.max(self.k_minus.first()?))
    }

    /// Highest index at which both a `K+` and a `K-` neighbour exist at or above.
    pub fn interpolation_ceiling(&self) -> Option<usize> {
        Some(*self.k_plus.last()?.min(self.k_minus.last()?))
    }
}

/// Indices at which a sequence of the given family and length is excited.
pub fn structural_excited_indices(family: Family, len: usize, basic_length: usize) -> Vec<usize> {
    match family {
        Family::Qrt => (1..len).collect(),
        Family::Dst => (0..len)
            .filter(|&k| (k % 6 == 1 || k % 6 == 5) && k != basic_length && k != 5 * basic_length)
            .collect(),
    }
}

/// `K+`, `K-` and `K` from the sequence's own values at its excited indices.
pub fn harmonic_sets(seq: &TernarySequence) -> HarmonicSets {
    let k_all = structural_excited_indices(seq.family(), seq.len(), seq.basic_length());
    let (k_plus, k_minus) = k_all.iter().partition(|&&k| seq.values()[k] > 0);
    HarmonicSets { k_plus, k_minus, k_all }
}

/// Complex eigenvalue of a ternary sequence at its excited harmonics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenvalue(pub Complex64);

impl Eigenvalue {
    pub fn value(self) -> Complex64 {
        self.0
    }

    pub fn magnitude(self) -> f64 {
        self.0.norm()
    }

    /// Short label such as `-j` or `+1.4142j`, rounded to four decimals.
    pub fn label(self) -> String {
        let Complex64 { re, im } = self.0;
        let round = |x: f64| (x * 1e4).round() / 1e4;
        let (re, im) = (round(re), round(im));
        match (re == 0.0, im == 0.0) {
            (true, true) => "0".into(),
            (false, true) => format!("{re}"),
            (true, false) if im == 1.0 => "j".into(),
            (true, false) if im == -1.0 => "-j".into(),
            (true, false) => format!("{im}j"),
            (false, false) => format!("{re}{im:+}j"),
        }
    }
}

/// Per-index deviation from the eigenvector identity.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenCheck {
    pub eigenvalue: Eigenvalue,
    pub max_residual: f64,
    pub worst_k: usize,
    /// Largest DFT magnitude outside the excited set (zero for QRT).
    pub max_leakage: f64,
    pub worst_leakage_k: usize,
}

/// Measures the eigenvalue empirically as `U(k*)/u(k*)` at the first excited
/// index with a nonzero value, and the residual `|U(k) - λ u(k)|` across
/// `excited`. Never raises on large residuals; see [`eigenvalue_of`].
pub fn eigen_check(values: &[f64], excited: &[usize]) -> Result<EigenCheck> {
    let spectrum = dft(values)?;
    let &k_star = excited
        .iter()
        .find(|&&k| values[k] != 0.0)
        .ok_or(Error::NoExcitedHarmonic)?;
    let lambda = spectrum[k_star] / values[k_star];

    let mut max_residual = 0.0;
    let mut worst_k = k_star;
    for &k in excited {
        let r = (spectrum[k] - lambda * values[k]).norm();
        if r > max_residual {
            max_residual = r;
            worst_k = k;
        }
    }

    let mut in_set = vec![false; values.len()];
    for &k in excited {
        in_set[k] = true;
    }
    let mut max_leakage = 0.0;
    let mut worst_leakage_k = 0;
    for (k, b) in spectrum.bins().iter().enumerate() {
        if !in_set[k] && b.norm() > max_leakage {
            max_leakage = b.norm();
            worst_leakage_k = k;
        }
    }

    Ok(EigenCheck {
        eigenvalue: Eigenvalue(lambda),
        max_residual,
        worst_k,
        max_leakage,
        worst_leakage_k,
    })
}

/// Eigenvalue of a QRT or DST sequence, verified at every excited harmonic.
pub fn eigenvalue_of(seq: &TernarySequence) -> Result<Eigenvalue> {
    eigenvalue_with_tolerance(&seq.to_f64(), &harmonic_sets(seq).k_all, EIGEN_TOLERANCE)
}

/// Like [`eigenvalue_of`] on raw values and an explicit excited set.
pub fn eigenvalue_with_tolerance(values: &[f64], excited: &[usize], tol: f64) -> Result<Eigenvalue> {
    let check = eigen_check(values, excited)?;
    if check.max_residual >= tol {
        return Err(Error::NotEigenvector {
            max_residual: check.max_residual,
            worst_k: check.worst_k,
        });
    }
    Ok(check.eigenvalue)
}
