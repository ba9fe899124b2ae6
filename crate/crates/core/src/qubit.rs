//! Jordan–Wigner qubit Hamiltonians, the UCCSD ansatz, a statevector
//! simulator, and gate/qubit resource estimates.
//!
//! Qubit `p` holds active spin orbital `p` (interleaved alpha/beta), and
//! `a+_p = (X_p - i Y_p)/2 Z_0 ... Z_{p-1}`. A Pauli string is a pair of
//! bitmasks `(x, z)` standing for `i^{|x & z|} X^x Z^z`, so a qubit with both
//! bits set carries `Y`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrals::{spin_orbital, ActiveSpaceHamiltonian, Spin};

pub type C64 = Complex<f64>;

/// Largest register handled by the statevector routines and Hamiltonian
/// construction.
pub const MAX_STATEVECTOR_QUBITS: usize = 24;
/// Coefficients below this magnitude are dropped.
pub const DROP_TOL: f64 = 1e-12;
/// Version tag of the gate-count model in [`estimate_gates`].
pub const GATE_MODEL_VERSION: &str = "pauli-exp-ladder-v1";

#[derive(Debug, Error, PartialEq)]
pub enum QubitError {
    #[error("{n_qubits} qubits exceed the limit of {max}")]
    Capacity { n_qubits: usize, max: usize },
    #[error("state of length {got} does not match {n_qubits} qubits")]
    Shape { n_qubits: usize, got: usize },
    #[error("invalid amplitude {0}")]
    InvalidAmplitude(String),
    #[error("generator term {0} is not anti-Hermitian")]
    NotAntiHermitian(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    pub x: u64,
    pub z: u64,
}

impl PauliString {
    pub const IDENTITY: PauliString = PauliString { x: 0, z: 0 };

    pub fn weight(&self) -> u32 {
        (self.x | self.z).count_ones()
    }

    /// Number of X or Y factors.
    pub fn flips(&self) -> u32 {
        self.x.count_ones()
    }

    /// `self * other = phase * result`.
    pub fn mul(&self, other: &PauliString) -> (C64, PauliString) {
        let x = self.x ^ other.x;
        let z = self.z ^ other.z;
        let k = (self.x & self.z).count_ones() as i64 + (other.x & other.z).count_ones() as i64
            - (x & z).count_ones() as i64
            + 2 * (self.z & other.x).count_ones() as i64;
        (i_pow(k), PauliString { x, z })
    }

    /// `P|b> = phase |b ^ x>`.
    #[inline]
    pub fn apply(&self, b: u64) -> (C64, u64) {
        let k = (self.x & self.z).count_ones() as i64 + 2 * (self.z & b).count_ones() as i64;
        (i_pow(k), b ^ self.x)
    }

    pub fn from_ops(ops: &[(usize, char)]) -> PauliString {
        let mut p = PauliString::IDENTITY;
        for &(q, c) in ops {
            match c {
                'X' => p.x |= 1 << q,
                'Z' => p.z |= 1 << q,
                'Y' => {
                    p.x |= 1 << q;
                    p.z |= 1 << q;
                }
                _ => {}
            }
        }
        p
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.x == 0 && self.z == 0 {
            return write!(f, "I");
        }
        let top = 64 - (self.x | self.z).leading_zeros() as usize;
        for q in 0..top {
            let c = match ((self.x >> q) & 1, (self.z >> q) & 1) {
                (0, 0) => continue,
                (1, 0) => 'X',
                (0, 1) => 'Z',
                _ => 'Y',
            };
            write!(f, "{c}{q}")?;
        }
        Ok(())
    }
}

#[inline]
fn i_pow(k: i64) -> C64 {
    match k.rem_euclid(4) {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

/// Linear combination of Pauli strings, kept sorted by string.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PauliSum {
    pub terms: BTreeMap<PauliString, C64>,
}

impl PauliSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut s = Self::new();
        s.add(PauliString::IDENTITY, C64::new(c, 0.0));
        s
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&mut self, p: PauliString, c: C64) {
        *self.terms.entry(p).or_insert(C64::new(0.0, 0.0)) += c;
    }

    pub fn add_sum(&mut self, other: &PauliSum, scale: C64) {
        for (p, c) in &other.terms {
            self.add(*p, c * scale);
        }
    }

    pub fn mul(&self, other: &PauliSum) -> PauliSum {
        let mut out = PauliSum::new();
        for (p1, c1) in &self.terms {
            for (p2, c2) in &other.terms {
                let (phase, p) = p1.mul(p2);
                out.add(p, c1 * c2 * phase);
            }
        }
        out
    }

    /// Drops terms with `|c| < DROP_TOL`.
    pub fn simplify(mut self) -> Self {
        self.terms.retain(|_, c| c.norm() >= DROP_TOL);
        self
    }

    pub fn get(&self, p: &PauliString) -> C64 {
        self.terms.get(p).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn max_qubit(&self) -> usize {
        self.terms.keys().map(|p| 64 - (p.x | p.z).leading_zeros() as usize).max().unwrap_or(0)
    }

    /// Dense matrix on `n_qubits` qubits (bit `q` of the basis index is qubit `q`).
    pub fn to_dense(&self, n_qubits: usize) -> Result<DMatrix<C64>, QubitError> {
        if n_qubits > 14 {
            return Err(QubitError::Capacity { n_qubits, max: 14 });
        }
        let dim = 1usize << n_qubits;
        let mut m = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
        for b in 0..dim as u64 {
            for (p, c) in &self.terms {
                let (phase, to) = p.apply(b);
                m[(to as usize, b as usize)] += c * phase;
            }
        }
        Ok(m)
    }

    /// Real part of the matrix restricted to basis states with the given
    /// numbers of set even (alpha) and odd (beta) bits.
    pub fn sector_matrix(&self, n_qubits: usize, n_alpha: usize, n_beta: usize) -> DMatrix<f64> {
        let even: u64 = (0..n_qubits).step_by(2).fold(0, |m, q| m | 1 << q);
        let states: Vec<u64> = (0..1u64 << n_qubits)
            .filter(|b| {
                (b & even).count_ones() as usize == n_alpha
                    && (b & !even).count_ones() as usize == n_beta
            })
            .collect();
        let index: HashMap<u64, usize> = states.iter().enumerate().map(|(i, &b)| (b, i)).collect();
        let mut m = DMatrix::zeros(states.len(), states.len());
        for (col, &b) in states.iter().enumerate() {
            for (p, c) in &self.terms {
                let (phase, to) = p.apply(b);
                if let Some(&row) = index.get(&to) {
                    m[(row, col)] += (c * phase).re;
                }
            }
        }
        m
    }
}

/// Ladder operator: mode index and whether it creates.
pub type Ladder = (usize, bool);

/// Sum of products of ladder operators with real coefficients.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FermionOperator {
    pub terms: Vec<(f64, Vec<Ladder>)>,
}

impl FermionOperator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, coeff: f64, ops: Vec<Ladder>) {
        self.terms.push((coeff, ops));
    }
}

fn ladder_image(p: usize, create: bool) -> PauliSum {
    let chain = (1u64 << p) - 1;
    let xp = PauliString { x: 1 << p, z: chain };
    let yp = PauliString { x: 1 << p, z: chain | 1 << p };
    let mut s = PauliSum::new();
    s.add(xp, C64::new(0.5, 0.0));
    s.add(yp, C64::new(0.0, if create { -0.5 } else { 0.5 }));
    s
}

/// Jordan–Wigner image with like terms merged and negligible terms dropped.
pub fn jordan_wigner(op: &FermionOperator) -> PauliSum {
    let mut out = PauliSum::new();
    for (coeff, ops) in &op.terms {
        let mut prod = PauliSum::constant(1.0);
        for &(p, create) in ops {
            prod = prod.mul(&ladder_image(p, create));
        }
        out.add_sum(&prod, C64::new(*coeff, 0.0));
    }
    out.simplify()
}

/// Qubit Hamiltonian of an active space with the core energy on the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitHamiltonian {
    pub n_qubits: usize,
    pub n_alpha: usize,
    pub n_beta: usize,
    pub sum: PauliSum,
}

/// `H = E_core + sum h_pq a+_p a_q + sum_{p<q, r<s} <pq||rs> a+_p a+_q a_s a_r`.
pub fn hamiltonian_to_qubit(ham: &ActiveSpaceHamiltonian) -> Result<QubitHamiltonian, QubitError> {
    let n = ham.n_spin();
    if n > MAX_STATEVECTOR_QUBITS {
        return Err(QubitError::Capacity { n_qubits: n, max: MAX_STATEVECTOR_QUBITS });
    }
    let create: Vec<PauliSum> = (0..n).map(|p| ladder_image(p, true)).collect();
    let annihilate: Vec<PauliSum> = (0..n).map(|p| ladder_image(p, false)).collect();
    let mut sum = PauliSum::constant(ham.core_energy);
    for p in 0..n {
        for q in 0..n {
            let h = ham.h1_spin(p, q);
            if h.abs() < DROP_TOL {
                continue;
            }
            sum.add_sum(&create[p].mul(&annihilate[q]), C64::new(h, 0.0));
        }
    }
    for p in 0..n {
        for q in p + 1..n {
            let cc = create[p].mul(&create[q]);
            for r in 0..n {
                for s in r + 1..n {
                    let v = ham.antisym(p, q, r, s);
                    if v.abs() < DROP_TOL {
                        continue;
                    }
                    let aa = annihilate[s].mul(&annihilate[r]);
                    sum.add_sum(&cc.mul(&aa), C64::new(v, 0.0));
                }
            }
        }
    }
    Ok(QubitHamiltonian { n_qubits: n, n_alpha: ham.n_occ, n_beta: ham.n_occ, sum: sum.simplify() })
}

/// Spin-conserving excitation from occupied to virtual spin orbitals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Excitation {
    Single { i: usize, a: usize },
    Double { i: usize, j: usize, a: usize, b: usize },
}

impl Excitation {
    /// `tau - tau+` with `tau = a+_a a_i` or `a+_a a+_b a_j a_i`.
    pub fn operator(&self, theta: f64) -> FermionOperator {
        let mut op = FermionOperator::new();
        match *self {
            Excitation::Single { i, a } => {
                op.push(theta, vec![(a, true), (i, false)]);
                op.push(-theta, vec![(i, true), (a, false)]);
            }
            Excitation::Double { i, j, a, b } => {
                op.push(theta, vec![(a, true), (b, true), (j, false), (i, false)]);
                op.push(-theta, vec![(i, true), (j, true), (b, false), (a, false)]);
            }
        }
        op
    }

    fn validate(&self) -> Result<(), QubitError> {
        let ok = match *self {
            Excitation::Single { i, a } => i != a,
            Excitation::Double { i, j, a, b } => i < j && a < b && ![a, b].contains(&i) && ![a, b].contains(&j),
        };
        if ok {
            Ok(())
        } else {
            Err(QubitError::InvalidAmplitude(format!("{self:?}")))
        }
    }
}

/// All spin-conserving singles `(i, a)` then doubles `(i < j, a < b)` for a
/// closed-shell active space, in lexicographic order.
pub fn excitations(n_occ: usize, n_orb: usize) -> Vec<Excitation> {
    let occ: Vec<usize> = (0..2 * n_occ).collect();
    let virt: Vec<usize> = (2 * n_occ..2 * n_orb).collect();
    let spin = spin_orbital::spin;
    let mut out = Vec::new();
    for &i in &occ {
        for &a in &virt {
            if spin(i) == spin(a) {
                out.push(Excitation::Single { i, a });
            }
        }
    }
    for (x, &i) in occ.iter().enumerate() {
        for &j in &occ[x + 1..] {
            for (y, &a) in virt.iter().enumerate() {
                for &b in &virt[y + 1..] {
                    let sz = |p: usize| if spin(p) == Spin::Alpha { 1 } else { -1 };
                    if sz(i) + sz(j) == sz(a) + sz(b) {
                        out.push(Excitation::Double { i, j, a, b });
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UccsdAmplitudes {
    pub singles: BTreeMap<(usize, usize), f64>,
    pub doubles: BTreeMap<(usize, usize, usize, usize), f64>,
}

impl UccsdAmplitudes {
    pub fn from_parameters(excitations: &[Excitation], theta: &[f64]) -> Self {
        let mut amps = Self::default();
        for (e, &t) in excitations.iter().zip(theta) {
            match *e {
                Excitation::Single { i, a } => {
                    amps.singles.insert((i, a), t);
                }
                Excitation::Double { i, j, a, b } => {
                    amps.doubles.insert((i, j, a, b), t);
                }
            }
        }
        amps
    }

    pub fn parameters(&self, excitations: &[Excitation]) -> Vec<f64> {
        excitations
            .iter()
            .map(|e| match *e {
                Excitation::Single { i, a } => self.singles.get(&(i, a)).copied().unwrap_or(0.0),
                Excitation::Double { i, j, a, b } => {
                    self.doubles.get(&(i, j, a, b)).copied().unwrap_or(0.0)
                }
            })
            .collect()
    }

    /// Stored excitations with their amplitudes, singles first.
    pub fn entries(&self) -> Vec<(Excitation, f64)> {
        let s = self.singles.iter().map(|(&(i, a), &t)| (Excitation::Single { i, a }, t));
        let d = self
            .doubles
            .iter()
            .map(|(&(i, j, a, b), &t)| (Excitation::Double { i, j, a, b }, t));
        s.chain(d).collect()
    }
}

/// Per-excitation JW images of `theta (tau - tau+)`, in the ansatz order.
/// Zero amplitudes contribute no factor.
pub fn uccsd_factors(amps: &UccsdAmplitudes) -> Result<Vec<PauliSum>, QubitError> {
    let mut out = Vec::new();
    for (e, t) in amps.entries() {
        e.validate()?;
        if t == 0.0 {
            continue;
        }
        out.push(jordan_wigner(&e.operator(t)));
    }
    Ok(out)
}

/// JW image of `T - T+`.
pub fn uccsd_generator(amps: &UccsdAmplitudes) -> Result<PauliSum, QubitError> {
    let mut g = PauliSum::new();
    for f in uccsd_factors(amps)? {
        g.add_sum(&f, C64::new(1.0, 0.0));
    }
    Ok(g.simplify())
}

/// Reference bitstring with the lowest `n_electrons` qubits set.
pub fn reference_state(n_electrons: usize) -> u64 {
    if n_electrons == 0 {
        0
    } else {
        u64::MAX >> (64 - n_electrons)
    }
}

fn check_qubits(n_qubits: usize) -> Result<(), QubitError> {
    if n_qubits > MAX_STATEVECTOR_QUBITS {
        Err(QubitError::Capacity { n_qubits, max: MAX_STATEVECTOR_QUBITS })
    } else {
        Ok(())
    }
}

/// Applies `exp(g P) = cos|g| + i sign sin|g| P` for a purely imaginary `g`.
pub fn apply_pauli_exponential(state: &mut [C64], p: &PauliString, g: C64) -> Result<(), QubitError> {
    if g.re.abs() > DROP_TOL {
        return Err(QubitError::NotAntiHermitian(p.to_string()));
    }
    let (cos, sin) = (g.im.cos(), g.im.sin());
    let isin = C64::new(0.0, sin);
    let old = state.to_vec();
    for (b, &amp) in old.iter().enumerate() {
        if amp == C64::new(0.0, 0.0) {
            continue;
        }
        let (phase, to) = p.apply(b as u64);
        state[to as usize] += isin * phase * amp;
    }
    for (s, o) in state.iter_mut().zip(&old) {
        *s -= o;
        *s += o * cos;
    }
    Ok(())
}

/// One first-order Trotter step: the factors' terms are applied in order
/// to the reference basis state.
pub fn trotter_state(
    factors: &[PauliSum],
    reference: u64,
    n_qubits: usize,
) -> Result<Vec<C64>, QubitError> {
    check_qubits(n_qubits)?;
    let mut state = vec![C64::new(0.0, 0.0); 1 << n_qubits];
    state[reference as usize] = C64::new(1.0, 0.0);
    for f in factors {
        for (p, g) in &f.terms {
            apply_pauli_exponential(&mut state, p, *g)?;
        }
    }
    Ok(state)
}

/// `<psi|H|psi>` by exact contraction, term by term.
pub fn expectation(state: &[C64], qham: &PauliSum, n_qubits: usize) -> Result<f64, QubitError> {
    check_qubits(n_qubits)?;
    if state.len() != 1 << n_qubits || qham.max_qubit() > n_qubits {
        return Err(QubitError::Shape { n_qubits, got: state.len() });
    }
    let mut e = C64::new(0.0, 0.0);
    for (p, c) in &qham.terms {
        let mut acc = C64::new(0.0, 0.0);
        for (b, amp) in state.iter().enumerate() {
            let (phase, to) = p.apply(b as u64);
            acc += state[to as usize].conj() * phase * amp;
        }
        e += c * acc;
    }
    Ok(e.re)
}

pub fn estimate_qubits(n_occ_active: usize, n_virt_kept: usize) -> usize {
    2 * (n_occ_active + n_virt_kept)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceEstimate {
    pub n_qubits: usize,
    pub one_qubit_gates: u64,
    pub two_qubit_gates: u64,
    /// `None` when the register is too large to build the Hamiltonian.
    pub n_pauli_terms_hamiltonian: Option<usize>,
    pub n_variational_parameters: usize,
}

/// Gate cost of one Pauli exponential: a CNOT ladder of `2(w-1)` two-qubit
/// gates, basis changes before and after each X/Y factor, and one rotation.
pub fn pauli_exponential_cost(p: &PauliString) -> (u64, u64) {
    let w = u64::from(p.weight());
    if w == 0 {
        return (0, 0);
    }
    (2 * u64::from(p.flips()) + 1, 2 * (w - 1))
}

/// Resources of the single-step UCCSD circuit over all spin-conserving
/// excitations of a closed-shell space with `n_occ` occupied and `n_virt`
/// virtual spatial orbitals. `ham`, when given and small enough, supplies
/// the Hamiltonian term count.
pub fn estimate_gates(
    n_occ: usize,
    n_virt: usize,
    ham: Option<&ActiveSpaceHamiltonian>,
) -> ResourceEstimate {
    let excs = excitations(n_occ, n_occ + n_virt);
    let (mut one, mut two) = (0u64, 0u64);
    for e in &excs {
        for p in jordan_wigner(&e.operator(1.0)).terms.keys() {
            let (o, t) = pauli_exponential_cost(p);
            one += o;
            two += t;
        }
    }
    let n_pauli_terms_hamiltonian =
        ham.and_then(|h| hamiltonian_to_qubit(h).ok()).map(|q| q.sum.len());
    ResourceEstimate {
        n_qubits: estimate_qubits(n_occ, n_virt),
        one_qubit_gates: one,
        two_qubit_gates: two,
        n_pauli_terms_hamiltonian,
        n_variational_parameters: excs.len(),
    }
}
