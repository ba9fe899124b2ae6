//! Variational UCCSD energies of increment active spaces.
//!
//! Two interchangeable backends evaluate the single-step Trotterized UCCSD
//! energy. The statevector backend builds the JW circuit state on all
//! `2^n` basis states. The determinant backend uses the fact that the JW
//! image of one excitation `theta (tau - tau+)` is a sum of commuting Pauli
//! terms, so its exponential is exactly a set of Givens rotations between
//! determinant pairs `(D, tau D)`; applied in the same order this yields the
//! same state restricted to the electron-number sector.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fci::{sigma_apply, DeterminantSpace, FciError};
use crate::integrals::{spin_orbital, ActiveSpaceHamiltonian, Spin};
use crate::mp2_fno::{FirstOrderAmplitudes, Mp2Error};
use crate::optimize::{minimize, MinimizeConfig};
use crate::qubit::{
    excitations, expectation, hamiltonian_to_qubit, reference_state, trotter_state, uccsd_factors,
    Excitation, QubitError, QubitHamiltonian, UccsdAmplitudes,
};

#[derive(Debug, Error, PartialEq)]
pub enum VqeError {
    #[error(transparent)]
    Fci(#[from] FciError),
    #[error(transparent)]
    Qubit(#[from] QubitError),
    #[error(transparent)]
    Mp2(#[from] Mp2Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VqeBackend {
    Determinant,
    Statevector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VqeConfig {
    pub backend: VqeBackend,
    pub optimizer: MinimizeConfig,
}

impl Default for VqeConfig {
    fn default() -> Self {
        Self { backend: VqeBackend::Determinant, optimizer: MinimizeConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VqeOutcome {
    pub energy: f64,
    pub amplitudes: UccsdAmplitudes,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// First-order doubles `<ij||ab> / e_ij^ab` for every spin-conserving
/// double; singles start at zero.
pub fn mp1_amplitudes(ham: &ActiveSpaceHamiltonian) -> Result<UccsdAmplitudes, VqeError> {
    let excs = excitations(ham.n_occ, ham.n_orb());
    let occ = ham.occupied_spin_orbitals();
    let virt = ham.virtual_spin_orbitals();
    let t = FirstOrderAmplitudes::new(ham, &occ, &virt)?;
    let no = occ.len();
    let theta: Vec<f64> = excs
        .iter()
        .map(|e| match *e {
            Excitation::Single { .. } => 0.0,
            // occupied labels are positions; virtual labels start at `no`
            Excitation::Double { i, j, a, b } => t.get(i, j, a - no, b - no),
        })
        .collect();
    Ok(UccsdAmplitudes::from_parameters(&excs, &theta))
}

/// Determinant-pair rotations of each excitation.
#[derive(Debug, Clone)]
pub struct DeterminantAnsatz {
    pub space: DeterminantSpace,
    pub excitations: Vec<Excitation>,
    /// `tau |D_I> = s |D_J>` entries `(I, J, s)` per excitation.
    pairs: Vec<Vec<(usize, usize, f64)>>,
}

impl DeterminantAnsatz {
    pub fn new(ham: &ActiveSpaceHamiltonian, excitations: Vec<Excitation>) -> Result<Self, VqeError> {
        let space = DeterminantSpace::for_hamiltonian(ham)?;
        let n = space.n_orb;
        let nb = space.beta.len();
        let alpha_index: HashMap<u64, usize> =
            space.alpha.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let beta_index: HashMap<u64, usize> =
            space.beta.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        // Position of a spin orbital in the alpha-then-beta ordering.
        let pos = |label: usize| {
            let p = spin_orbital::spatial(label);
            if spin_orbital::spin(label) == Spin::Alpha {
                p
            } else {
                n + p
            }
        };
        let masks: Vec<u128> = (0..space.len())
            .map(|i| {
                let (a, b) = space.det(i);
                u128::from(a) | (u128::from(b) << n)
            })
            .collect();
        let mut pairs = Vec::with_capacity(excitations.len());
        for e in &excitations {
            // Operators applied right to left.
            let (destroy, create): (Vec<usize>, Vec<usize>) = match *e {
                Excitation::Single { i, a } => (vec![pos(i)], vec![pos(a)]),
                Excitation::Double { i, j, a, b } => (vec![pos(i), pos(j)], vec![pos(b), pos(a)]),
            };
            let mut list = Vec::new();
            for (idx, &m0) in masks.iter().enumerate() {
                let mut m = m0;
                let mut flips = 0u32;
                let mut ok = true;
                for &p in &destroy {
                    if m & (1u128 << p) == 0 {
                        ok = false;
                        break;
                    }
                    flips += (m & ((1u128 << p) - 1)).count_ones();
                    m &= !(1u128 << p);
                }
                for &p in &create {
                    if !ok || m & (1u128 << p) != 0 {
                        ok = false;
                        break;
                    }
                    flips += (m & ((1u128 << p) - 1)).count_ones();
                    m |= 1u128 << p;
                }
                if !ok {
                    continue;
                }
                let a = (m & ((1u128 << n) - 1)) as u64;
                let b = (m >> n) as u64;
                let target = alpha_index[&a] * nb + beta_index[&b];
                list.push((idx, target, if flips.is_multiple_of(2) { 1.0 } else { -1.0 }));
            }
            pairs.push(list);
        }
        Ok(Self { space, excitations, pairs })
    }

    /// Ansatz state for parameters in excitation order.
    pub fn state(&self, theta: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; self.space.len()];
        c[0] = 1.0;
        for (list, &t) in self.pairs.iter().zip(theta) {
            if t == 0.0 {
                continue;
            }
            let (cos, sin) = (t.cos(), t.sin());
            for &(i, j, s) in list {
                let (ci, cj) = (c[i], c[j]);
                c[i] = cos * ci - s * sin * cj;
                c[j] = cos * cj + s * sin * ci;
            }
        }
        c
    }

    pub fn energy(&self, ham: &ActiveSpaceHamiltonian, theta: &[f64]) -> Result<f64, VqeError> {
        let c = self.state(theta);
        let hc = sigma_apply(ham, &self.space, &c)?;
        Ok(c.iter().zip(&hc).map(|(x, y)| x * y).sum())
    }
}

/// Energy of the statevector circuit for the given amplitudes.
pub fn statevector_energy(
    qham: &QubitHamiltonian,
    amps: &UccsdAmplitudes,
) -> Result<f64, VqeError> {
    let factors = uccsd_factors(amps)?;
    let psi = trotter_state(&factors, reference_state(qham.n_alpha + qham.n_beta), qham.n_qubits)?;
    Ok(expectation(&psi, &qham.sum, qham.n_qubits)?)
}

/// Minimizes the UCCSD energy over all spin-conserving excitations of the
/// space, starting from `init` (missing entries start at zero).
pub fn vqe_minimize(
    ham: &ActiveSpaceHamiltonian,
    init: &UccsdAmplitudes,
    cfg: &VqeConfig,
) -> Result<VqeOutcome, VqeError> {
    let excs = excitations(ham.n_occ, ham.n_orb());
    let x0 = init.parameters(&excs);
    let result = match cfg.backend {
        VqeBackend::Determinant => {
            let ansatz = DeterminantAnsatz::new(ham, excs.clone())?;
            // Evaluate once up front so errors surface before optimizing.
            ansatz.energy(ham, &x0)?;
            minimize(|x| ansatz.energy(ham, x).unwrap_or(f64::INFINITY), &x0, &cfg.optimizer)
        }
        VqeBackend::Statevector => {
            let qham = hamiltonian_to_qubit(ham)?;
            statevector_energy(&qham, init)?;
            minimize(
                |x| {
                    statevector_energy(&qham, &UccsdAmplitudes::from_parameters(&excs, x))
                        .unwrap_or(f64::INFINITY)
                },
                &x0,
                &cfg.optimizer,
            )
        }
    };
    Ok(VqeOutcome {
        energy: result.f,
        amplitudes: UccsdAmplitudes::from_parameters(&excs, &result.x),
        iterations: result.iterations,
        evaluations: result.evaluations,
        converged: result.converged,
    })
}

/// `E_VQE - E_HF` of an increment's active space, from first-order
/// starting amplitudes.
pub fn solve_increment_vqe(
    ham: &ActiveSpaceHamiltonian,
    cfg: &VqeConfig,
) -> Result<(f64, VqeOutcome), VqeError> {
    let e_hf = ham.hf_energy();
    if ham.n_virt() == 0 || ham.n_occ == 0 {
        let outcome = VqeOutcome {
            energy: e_hf,
            amplitudes: UccsdAmplitudes::default(),
            iterations: 0,
            evaluations: 0,
            converged: true,
        };
        return Ok((0.0, outcome));
    }
    let init = mp1_amplitudes(ham)?;
    let outcome = vqe_minimize(ham, &init, cfg)?;
    Ok((outcome.energy - e_hf, outcome))
}
