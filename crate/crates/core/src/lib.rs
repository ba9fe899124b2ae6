//! Method-of-increments correlation energies with frozen natural orbital
//! virtual-space truncation.
//!
//! The pipeline expands the correlation energy over subsets of occupied
//! orbitals, truncates each subproblem's virtual space with MP2 natural
//! orbitals, solves it with exact diagonalization or a simulated VQE-UCCSD
//! solver, and reconstructs the total energy together with quantum-resource
//! estimates.

pub mod fci;
pub mod increments;
pub mod integrals;
pub mod mp2_fno;
pub mod optimize;
pub mod orchestrator;
pub mod qubit;
pub mod vqe;

pub use fci::{DavidsonConfig, DeterminantSpace, FciError};
pub use increments::{Increment, IncrementError, IncrementLedger};
pub use integrals::{parse_fcidump, ActiveSpaceHamiltonian, IntegralError, IntegralStore};
pub use mp2_fno::{FnoPolicy, FnoSubspace, Mp2Error, Mp2Result, VvDensityBlock};

/// Formats like C's `%.{prec}g`.
pub fn fmt_g(x: f64, prec: usize) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let prec = prec.max(1);
    let sci = format!("{:.*e}", prec - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent in {:e} output");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= prec as i32 {
        let mantissa = strip_fraction_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (prec as i32 - 1 - exp) as usize;
        strip_fraction_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_fraction_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
