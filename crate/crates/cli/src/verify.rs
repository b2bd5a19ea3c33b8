use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use num_complex::Complex64;

use prs_eis::io::{infer_family, read_sequence_values};
use prs_eis::sequences::{
    dst_eigenvalue_factor, eigen_check, is_prime, is_valid_dst_basic_length, is_valid_qrt_length,
    structural_excited_indices, EIGEN_TOLERANCE, SPECIAL_SEQUENCE,
};
use prs_eis::{generate_qrt, Family};

use crate::manifest::{beside, Recorder, RunManifest};
use crate::{CliError, CliResult, Context};

/// Above this length multiplicativity is checked for `d < MULTIPLICATIVE_ROWS` only.
const FULL_MULTIPLICATIVE_MAX: usize = 4096;
const MULTIPLICATIVE_ROWS: usize = 256;

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Sequence file (one value per line or `index,value` CSV).
    pub sequence: PathBuf,
    /// Report file (default: `<sequence file name>.verify.txt` in the output directory).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

fn multiplicativity(u: &[i8]) -> Check {
    let n = u.len();
    let rows = if n <= FULL_MULTIPLICATIVE_MAX {
        n
    } else {
        MULTIPLICATIVE_ROWS
    };
    for d in 0..rows {
        for m in 0..n {
            if u[(d * m) % n] != u[d] * u[m] {
                return check(
                    "multiplicativity",
                    false,
                    format!(
                        "u({d}·{m} mod {n}) = {} but u({d})·u({m}) = {}",
                        u[(d * m) % n],
                        u[d] * u[m]
                    ),
                );
            }
        }
    }
    check(
        "multiplicativity",
        true,
        format!("u(dn) = u(d)u(n) for d < {rows}, n < {n}"),
    )
}

fn eigen_checks(values: &[f64], excited: &[usize], expected: Option<Complex64>, family: Family) -> Vec<Check> {
    let c = match eigen_check(values, excited) {
        Ok(c) => c,
        Err(e) => return vec![check("eigenvector", false, e.to_string())],
    };
    let mut out = vec![check(
        "eigenvector",
        c.max_residual < EIGEN_TOLERANCE,
        format!(
            "max |U(k) - λu(k)| = {:.3e} at k = {} (tol {EIGEN_TOLERANCE:.0e}), λ = {}",
            c.max_residual,
            c.worst_k,
            c.eigenvalue.label()
        ),
    )];
    if family == Family::Dst {
        out.push(check(
            "suppression",
            c.max_leakage < EIGEN_TOLERANCE,
            format!(
                "max |U(k)| outside K = {:.3e} at k = {}",
                c.max_leakage, c.worst_leakage_k
            ),
        ));
        let err = (c.eigenvalue.magnitude() - 2f64.sqrt()).abs();
        out.push(check(
            "eigenvalue magnitude",
            err < EIGEN_TOLERANCE,
            format!("|λ| - √2 = {err:.3e}"),
        ));
    }
    if let Some(want) = expected {
        let err = (c.eigenvalue.value() - want).norm();
        out.push(check(
            "eigenvalue",
            err < EIGEN_TOLERANCE,
            format!(
                "λ = {}, expected {} ({err:.3e} apart)",
                c.eigenvalue.label(),
                label(want)
            ),
        ));
    }
    out
}

fn label(z: Complex64) -> String {
    prs_eis::sequences::Eigenvalue(z).label()
}

fn qrt_eigenvalue(n: usize) -> Complex64 {
    if n % 4 == 1 {
        Complex64::new(1.0, 0.0)
    } else {
        Complex64::new(0.0, -1.0)
    }
}

fn verify_qrt(u: &[i8]) -> Vec<Check> {
    let n = u.len();
    let valid = is_valid_qrt_length(n);
    let mut out = vec![check(
        "length",
        valid,
        format!("N = {n} {} an odd prime", if valid { "is" } else { "is not" }),
    )];
    out.push(multiplicativity(u));
    let values: Vec<f64> = u.iter().map(|&v| v as f64).collect();
    let excited: Vec<usize> = (0..n).collect();
    out.extend(eigen_checks(
        &values,
        &excited,
        valid.then(|| qrt_eigenvalue(n)),
        Family::Qrt,
    ));
    out
}

fn verify_dst(u: &[i8], nb: usize) -> Vec<Check> {
    let n = u.len();
    let valid = is_valid_dst_basic_length(nb) && is_prime(nb as u64);
    let mut out = vec![check(
        "length",
        valid,
        format!(
            "N = 6 × {nb}, basic length {} a prime 5 + 6p or 7 + 6p",
            if valid { "is" } else { "is not" }
        ),
    )];
    let mut expected = None;
    if valid {
        let basic = generate_qrt(nb).expect("valid basic length");
        let b = basic.values();
        let bad = (0..n).find(|&i| u[i] != SPECIAL_SEQUENCE[i % 6] * b[i % nb]);
        out.push(match bad {
            None => check("structure", true, format!("u(n) = s(n mod 6)·b(n mod {nb}) for all n")),
            Some(i) => check(
                "structure",
                false,
                format!(
                    "u({i}) = {} but s·b gives {}",
                    u[i],
                    SPECIAL_SEQUENCE[i % 6] * b[i % nb]
                ),
            ),
        });
        let r = dst_eigenvalue_factor(&basic).expect("QRT basic") as f64;
        expected = Some(Complex64::new(0.0, 2f64.sqrt() * r) * qrt_eigenvalue(nb));
    }
    let values: Vec<f64> = u.iter().map(|&v| v as f64).collect();
    let excited = structural_excited_indices(Family::Dst, n, nb);
    out.extend(eigen_checks(&values, &excited, expected, Family::Dst));
    out
}

/// Runs every property check for the family implied by the length.
pub fn verify_values(u: &[i8]) -> (Family, Vec<Check>) {
    match infer_family(u.len()) {
        (Family::Qrt, _) => (Family::Qrt, verify_qrt(u)),
        (Family::Dst, nb) => (Family::Dst, verify_dst(u, nb)),
    }
}

pub fn run(args: &VerifyArgs, ctx: &Context) -> CliResult<RunManifest> {
    let values = read_sequence_values(&args.sequence)?;
    let (family, checks) = verify_values(&values);

    let mut report = String::new();
    let _ = writeln!(
        report,
        "# {} ({} of length {})",
        args.sequence.display(),
        family.name(),
        values.len()
    );
    for c in &checks {
        let _ = writeln!(
            report,
            "{} {}: {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();

    let path = args.report.clone().unwrap_or_else(|| {
        let mut name = args.sequence.file_name().unwrap_or_default().to_owned();
        name.push(".verify.txt");
        ctx.out_dir.join(name)
    });
    let mut rec = Recorder::new("verify", ctx);
    rec.input(&args.sequence)?;
    rec.option("family", family.name());
    rec.option("length", values.len());
    rec.write(&path, report.as_bytes())?;
    let manifest = rec.finish(&beside(&path))?;

    print!("{report}");
    if failed.is_empty() {
        Ok(manifest)
    } else {
        Err(CliError::Check(format!("failed checks: {}", failed.join(", "))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use prs_eis::generate_dst;

    #[test]
    fn generated_sequences_pass_every_check() {
        for n in [5usize, 7, 13, 29] {
            let qrt = generate_qrt(n).unwrap();
            let (family, checks) = verify_values(qrt.values());
            assert_eq!(family, Family::Qrt);
            assert!(checks.iter().all(|c| c.pass), "{n}: {checks:?}");
            let (family, checks) = verify_values(generate_dst(&qrt).unwrap().values());
            assert_eq!(family, Family::Dst);
            assert!(checks.iter().all(|c| c.pass), "dst {n}: {checks:?}");
        }
    }

    #[test]
    fn flipped_entry_breaks_structure_at_that_index() {
        let mut u = generate_dst(&generate_qrt(11).unwrap()).unwrap().values().to_vec();
        u[19] = -u[19];
        let (_, checks) = verify_values(&u);
        let structure = checks.iter().find(|c| c.name == "structure").unwrap();
        assert!(!structure.pass);
        assert!(structure.detail.starts_with("u(19)"));
        assert!(!checks.iter().find(|c| c.name == "eigenvector").unwrap().pass);
    }

    #[test]
    fn non_prime_length_fails_length_check() {
        let (_, checks) = verify_values(&[0, 1, -1, 1, -1, 1, -1, 1, -1]);
        assert!(!checks[0].pass);
    }
}
