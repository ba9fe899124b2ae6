//! Determinant-based full configuration interaction.
//!
//! Determinants are pairs of alpha and beta occupation strings stored as
//! bitmasks over active spatial orbitals. The composite determinant is
//! `prod_{p in alpha} a+_{p,alpha} prod_{q in beta} a+_{q,beta} |vac>` with
//! both products in ascending orbital order, i.e. the alpha string comes
//! first in the concatenated ordering that fixes fermionic signs.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::integrals::{spin_orbital, ActiveSpaceHamiltonian, Spin};

#[derive(Debug, Error, PartialEq)]
pub enum FciError {
    #[error("vector of length {got} does not match {expected} determinants")]
    Shape { expected: usize, got: usize },
    #[error("Davidson did not converge in {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },
    #[error("invalid determinant space: {0}")]
    Space(String),
    #[error("invalid Davidson configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DavidsonConfig {
    pub max_subspace: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Spaces with at most this many determinants are diagonalized densely.
    pub dense_threshold: usize,
}

impl Default for DavidsonConfig {
    fn default() -> Self {
        Self { max_subspace: 20, tol: 1e-9, max_iter: 200, dense_threshold: 200 }
    }
}

impl DavidsonConfig {
    fn validate(&self) -> Result<(), FciError> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(FciError::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_subspace < 2 {
            return Err(FciError::Config("max_subspace must be at least 2".into()));
        }
        Ok(())
    }
}

/// `E_pq |string> = sign |target>` for `p` empty (or `p == q`) and `q` occupied.
#[derive(Debug, Clone, Copy)]
struct Excitation {
    p: usize,
    q: usize,
    target: usize,
    sign: f64,
}

/// All strings of `n` orbitals with `k` electrons in lexicographic order of
/// their occupied-index tuples; the lowest-index string comes first.
fn strings(n: usize, k: usize) -> Vec<u64> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().fold(0u64, |m, &i| m | (1 << i)));
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[inline]
fn parity_below(mask: u64, p: usize) -> f64 {
    if (mask & ((1u64 << p) - 1)).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn excitation_lists(n: usize, strs: &[u64]) -> Vec<Vec<Excitation>> {
    let index: HashMap<u64, usize> = strs.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    strs.iter()
        .map(|&s| {
            let mut list = Vec::new();
            for q in (0..n).filter(|&q| s & (1 << q) != 0) {
                let s1 = s & !(1 << q);
                let sign_q = parity_below(s, q);
                for p in (0..n).filter(|&p| s1 & (1 << p) == 0) {
                    let t = s1 | (1 << p);
                    list.push(Excitation { p, q, target: index[&t], sign: sign_q * parity_below(s1, p) });
                }
            }
            list
        })
        .collect()
}

/// Ordered determinant basis of an active space (alpha-string major).
#[derive(Debug, Clone)]
pub struct DeterminantSpace {
    pub n_orb: usize,
    pub n_alpha: usize,
    pub n_beta: usize,
    pub alpha: Vec<u64>,
    pub beta: Vec<u64>,
    alpha_ex: Vec<Vec<Excitation>>,
    beta_ex: Vec<Vec<Excitation>>,
}

impl DeterminantSpace {
    pub fn new(n_orb: usize, n_alpha: usize, n_beta: usize) -> Result<Self, FciError> {
        if n_orb > 63 {
            return Err(FciError::Space(format!("{n_orb} orbitals exceed the 63-bit string limit")));
        }
        if n_alpha > n_orb || n_beta > n_orb {
            return Err(FciError::Space(format!(
                "{n_alpha} alpha / {n_beta} beta electrons in {n_orb} orbitals"
            )));
        }
        let alpha = strings(n_orb, n_alpha);
        let beta = strings(n_orb, n_beta);
        let alpha_ex = excitation_lists(n_orb, &alpha);
        let beta_ex = excitation_lists(n_orb, &beta);
        Ok(Self { n_orb, n_alpha, n_beta, alpha, beta, alpha_ex, beta_ex })
    }

    /// Closed-shell space of a Hamiltonian's reference.
    pub fn for_hamiltonian(ham: &ActiveSpaceHamiltonian) -> Result<Self, FciError> {
        Self::new(ham.n_orb(), ham.n_occ, ham.n_occ)
    }

    pub fn len(&self) -> usize {
        self.alpha.len() * self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_spin_orbitals(&self) -> usize {
        2 * self.n_orb
    }

    /// `(alpha, beta)` strings of determinant `i`.
    pub fn det(&self, i: usize) -> (u64, u64) {
        let nb = self.beta.len();
        (self.alpha[i / nb], self.beta[i % nb])
    }

    pub fn index_of(&self, alpha: u64, beta: u64) -> Option<usize> {
        let ia = self.alpha.iter().position(|&s| s == alpha)?;
        let ib = self.beta.iter().position(|&s| s == beta)?;
        Some(ia * self.beta.len() + ib)
    }

    /// Occupied active spin-orbital labels (interleaved convention) of
    /// determinant `i`, alpha first.
    pub fn spin_orbitals(&self, i: usize) -> Vec<usize> {
        let (a, b) = self.det(i);
        let mut out: Vec<usize> = (0..self.n_orb)
            .filter(|&p| a & (1 << p) != 0)
            .map(|p| spin_orbital::index(p, Spin::Alpha))
            .collect();
        out.extend(
            (0..self.n_orb).filter(|&p| b & (1 << p) != 0).map(|p| spin_orbital::index(p, Spin::Beta)),
        );
        out
    }

    fn check(&self, ham: &ActiveSpaceHamiltonian) -> Result<(), FciError> {
        if ham.n_orb() != self.n_orb {
            return Err(FciError::Space(format!(
                "Hamiltonian has {} orbitals, space has {}",
                ham.n_orb(),
                self.n_orb
            )));
        }
        Ok(())
    }
}

/// `k_pq = h_pq - 1/2 sum_r (pr|rq)`, the one-body part left after writing
/// the two-body operator as `1/2 sum (pq|rs) E_pq E_rs`.
fn modified_one_body(ham: &ActiveSpaceHamiltonian) -> DMatrix<f64> {
    let n = ham.n_orb();
    DMatrix::from_fn(n, n, |p, q| {
        ham.h1[(p, q)] - 0.5 * (0..n).map(|r| ham.eri(p, r, r, q)).sum::<f64>()
    })
}

/// Row of the same-spin Hamiltonian for one string: `f[K] = <K|H_sigma|I>`.
fn one_spin_row(
    ham: &ActiveSpaceHamiltonian,
    k1: &DMatrix<f64>,
    ex: &[Vec<Excitation>],
    i: usize,
    f: &mut [f64],
    touched: &mut Vec<usize>,
) {
    for e1 in &ex[i] {
        let j = e1.target;
        if f[j] == 0.0 {
            touched.push(j);
        }
        f[j] += e1.sign * k1[(e1.p, e1.q)];
        for e2 in &ex[j] {
            let k = e2.target;
            if f[k] == 0.0 {
                touched.push(k);
            }
            f[k] += 0.5 * e1.sign * e2.sign * ham.eri(e2.p, e2.q, e1.p, e1.q);
        }
    }
}

/// `H c` over the determinant space, including the core energy.
pub fn sigma_apply(
    ham: &ActiveSpaceHamiltonian,
    space: &DeterminantSpace,
    c: &[f64],
) -> Result<Vec<f64>, FciError> {
    space.check(ham)?;
    if c.len() != space.len() {
        return Err(FciError::Shape { expected: space.len(), got: c.len() });
    }
    let n = ham.n_orb();
    let (na, nb) = (space.alpha.len(), space.beta.len());
    let k1 = modified_one_body(ham);
    let mut sigma: Vec<f64> = c.iter().map(|x| ham.core_energy * x).collect();

    let mut f = vec![0.0; na.max(nb)];
    let mut touched = Vec::new();
    // alpha-alpha and alpha one-body
    for ia in 0..na {
        one_spin_row(ham, &k1, &space.alpha_ex, ia, &mut f, &mut touched);
        touched.sort_unstable();
        touched.dedup();
        let row = &mut sigma[ia * nb..(ia + 1) * nb];
        for &ka in &touched {
            let v = f[ka];
            f[ka] = 0.0;
            if v == 0.0 {
                continue;
            }
            for (s, x) in row.iter_mut().zip(&c[ka * nb..(ka + 1) * nb]) {
                *s += v * x;
            }
        }
        touched.clear();
    }
    // beta-beta and beta one-body
    for ib in 0..nb {
        one_spin_row(ham, &k1, &space.beta_ex, ib, &mut f, &mut touched);
        touched.sort_unstable();
        touched.dedup();
        for &kb in &touched {
            let v = f[kb];
            f[kb] = 0.0;
            if v == 0.0 {
                continue;
            }
            for ia in 0..na {
                sigma[ia * nb + ib] += v * c[ia * nb + kb];
            }
        }
        touched.clear();
    }
    // alpha-beta: sum (pq|rs) E^a_pq E^b_rs
    let n2 = n * n;
    for ja in 0..na {
        for ea in &space.alpha_ex[ja] {
            let eri_row = &ham.h2[(ea.p * n + ea.q) * n2..(ea.p * n + ea.q + 1) * n2];
            let out = ea.target * nb;
            for jb in 0..nb {
                let cj = c[ja * nb + jb];
                if cj == 0.0 {
                    continue;
                }
                let w = ea.sign * cj;
                for eb in &space.beta_ex[jb] {
                    sigma[out + eb.target] += w * eb.sign * eri_row[eb.p * n + eb.q];
                }
            }
        }
    }
    Ok(sigma)
}

/// Diagonal of the Hamiltonian in the determinant basis.
pub fn diagonal(ham: &ActiveSpaceHamiltonian, space: &DeterminantSpace) -> Vec<f64> {
    let n = ham.n_orb();
    let occ = |m: u64| (0..n).filter(move |&p| m & (1 << p) != 0);
    (0..space.len())
        .map(|i| {
            let (a, b) = space.det(i);
            let mut e = ham.core_energy;
            for p in occ(a).chain(occ(b)) {
                e += ham.h1[(p, p)];
            }
            for (s, t, same) in [(a, a, true), (b, b, true), (a, b, false), (b, a, false)] {
                for p in occ(s) {
                    for q in occ(t) {
                        e += 0.5 * ham.eri(p, p, q, q);
                        if same {
                            e -= 0.5 * ham.eri(p, q, q, p);
                        }
                    }
                }
            }
            e
        })
        .collect()
}

/// Dense Hamiltonian from Slater–Condon rules in the spin-orbital basis.
///
/// Determinants are written as bitmasks over positions in the concatenated
/// alpha-then-beta ordering, and the signs are obtained by applying creation
/// and annihilation operators to those masks. It shares no code with
/// [`sigma_apply`] and serves as its reference.
pub fn dense_hamiltonian(ham: &ActiveSpaceHamiltonian, space: &DeterminantSpace) -> DMatrix<f64> {
    let n = space.n_orb;
    let label = |pos: usize| {
        if pos < n {
            spin_orbital::index(pos, Spin::Alpha)
        } else {
            spin_orbital::index(pos - n, Spin::Beta)
        }
    };
    let masks: Vec<u128> = (0..space.len())
        .map(|i| {
            let (a, b) = space.det(i);
            u128::from(a) | (u128::from(b) << n)
        })
        .collect();
    let bits = |m: u128| (0..2 * n).filter(move |&p| m & (1u128 << p) != 0);
    let below = |m: u128, p: usize| (m & ((1u128 << p) - 1)).count_ones();
    // a+_a a_i |m> = sign |m'>
    let hop = |m: u128, i: usize, a: usize| -> (u128, u32) {
        let s1 = below(m, i);
        let m1 = m & !(1u128 << i);
        (m1 | (1u128 << a), s1 + below(m1, a))
    };
    let dim = masks.len();
    let mut h = DMatrix::zeros(dim, dim);
    for (x, &mx) in masks.iter().enumerate() {
        for (y, &my) in masks.iter().enumerate().skip(x) {
            let diff = mx ^ my;
            let v = match diff.count_ones() {
                0 => {
                    let occ: Vec<usize> = bits(mx).map(label).collect();
                    let mut e = ham.core_energy;
                    for &i in &occ {
                        e += ham.h1_spin(i, i);
                        for &j in &occ {
                            e += 0.5 * ham.antisym(i, j, i, j);
                        }
                    }
                    e
                }
                2 => {
                    // |y> = a+_a a_i |x> up to sign
                    let i = bits(mx & diff).next().unwrap();
                    let a = bits(my & diff).next().unwrap();
                    let (m, phase) = hop(mx, i, a);
                    debug_assert_eq!(m, my);
                    let (li, la) = (label(i), label(a));
                    let mut e = ham.h1_spin(la, li);
                    for j in bits(mx & my) {
                        e += ham.antisym(la, label(j), li, label(j));
                    }
                    if phase % 2 == 0 {
                        e
                    } else {
                        -e
                    }
                }
                4 => {
                    let mut holes = bits(mx & diff);
                    let (i, j) = (holes.next().unwrap(), holes.next().unwrap());
                    let mut parts = bits(my & diff);
                    let (a, b) = (parts.next().unwrap(), parts.next().unwrap());
                    // a+_a a+_b a_j a_i |x>
                    let mut m = mx;
                    let mut phase = below(m, i);
                    m &= !(1u128 << i);
                    phase += below(m, j);
                    m &= !(1u128 << j);
                    phase += below(m, b);
                    m |= 1u128 << b;
                    phase += below(m, a);
                    m |= 1u128 << a;
                    debug_assert_eq!(m, my);
                    let e = ham.antisym(label(a), label(b), label(i), label(j));
                    if phase % 2 == 0 {
                        e
                    } else {
                        -e
                    }
                }
                _ => 0.0,
            };
            h[(x, y)] = v;
            h[(y, x)] = v;
        }
    }
    h
}

#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub energy: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

fn dense_lowest(h: DMatrix<f64>) -> Eigenpair {
    let eig = h.clone().symmetric_eigen();
    let k = eig.eigenvalues.imin();
    let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
    let dom = (0..v.len()).fold(0, |b, i| if v[i].abs() > v[b].abs() + 1e-12 { i } else { b });
    if v[dom] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let energy = eig.eigenvalues[k];
    let hv = &h * DVector::from_column_slice(&v);
    let residual = hv.iter().zip(&v).map(|(a, b)| (a - energy * b).powi(2)).sum::<f64>().sqrt();
    Eigenpair { energy, vector: v, residual, iterations: 0 }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lowest eigenpair, seeded with the reference determinant.
pub fn davidson_lowest(
    ham: &ActiveSpaceHamiltonian,
    space: &DeterminantSpace,
    cfg: &DavidsonConfig,
) -> Result<Eigenpair, FciError> {
    cfg.validate()?;
    space.check(ham)?;
    let dim = space.len();
    if dim == 0 {
        return Err(FciError::Space("empty determinant space".into()));
    }
    if dim <= cfg.dense_threshold {
        return Ok(dense_lowest(dense_hamiltonian(ham, space)));
    }

    let diag = diagonal(ham, space);
    let mut seed = vec![0.0; dim];
    seed[0] = 1.0;
    let mut basis: Vec<Vec<f64>> = vec![seed];
    let mut images: Vec<Vec<f64>> = vec![sigma_apply(ham, space, &basis[0])?];
    let mut best = f64::INFINITY;
    for iter in 1..=cfg.max_iter {
        let m = basis.len();
        let proj = DMatrix::from_fn(m, m, |i, j| dot(&basis[i], &images[j]));
        let proj = (&proj + proj.transpose()) * 0.5;
        let eig = proj.symmetric_eigen();
        let k = eig.eigenvalues.imin();
        let theta = eig.eigenvalues[k];
        let y = eig.eigenvectors.column(k);
        let mut x = vec![0.0; dim];
        let mut r = vec![0.0; dim];
        for j in 0..m {
            for i in 0..dim {
                x[i] += y[j] * basis[j][i];
                r[i] += y[j] * images[j][i];
            }
        }
        for i in 0..dim {
            r[i] -= theta * x[i];
        }
        let res = dot(&r, &r).sqrt();
        best = best.min(res);
        if res <= cfg.tol {
            if x[0] < 0.0 {
                x.iter_mut().for_each(|v| *v = -*v);
            }
            return Ok(Eigenpair { energy: theta, vector: x, residual: res, iterations: iter });
        }
        let mut t: Vec<f64> = r
            .iter()
            .zip(&diag)
            .map(|(ri, di)| {
                let den = theta - di;
                ri / if den.abs() < 1e-8 { 1e-8_f64.copysign(den) } else { den }
            })
            .collect();
        if m >= cfg.max_subspace {
            let norm = dot(&x, &x).sqrt();
            x.iter_mut().for_each(|v| *v /= norm);
            let hx = sigma_apply(ham, space, &x)?;
            basis = vec![x];
            images = vec![hx];
        }
        for _ in 0..2 {
            for b in &basis {
                let o = dot(b, &t);
                t.iter_mut().zip(b).for_each(|(ti, bi)| *ti -= o * bi);
            }
        }
        let norm = dot(&t, &t).sqrt();
        if norm < 1e-14 {
            // No new direction; use the raw residual instead.
            t = r;
            for _ in 0..2 {
                for b in &basis {
                    let o = dot(b, &t);
                    t.iter_mut().zip(b).for_each(|(ti, bi)| *ti -= o * bi);
                }
            }
            let norm = dot(&t, &t).sqrt();
            if norm < 1e-14 {
                return Err(FciError::Convergence { iterations: iter, residual: best });
            }
            t.iter_mut().for_each(|v| *v /= norm);
        } else {
            t.iter_mut().for_each(|v| *v /= norm);
        }
        images.push(sigma_apply(ham, space, &t)?);
        basis.push(t);
    }
    Err(FciError::Convergence { iterations: cfg.max_iter, residual: best })
}

/// Ground-state energy of the active space.
pub fn fci_energy(ham: &ActiveSpaceHamiltonian, cfg: &DavidsonConfig) -> Result<f64, FciError> {
    let space = DeterminantSpace::for_hamiltonian(ham)?;
    Ok(davidson_lowest(ham, &space, cfg)?.energy)
}

/// `E_FCI - E_HF` of an increment's active space; never positive.
pub fn solve_increment_fci(ham: &ActiveSpaceHamiltonian) -> Result<f64, FciError> {
    solve_increment_fci_with(ham, &DavidsonConfig::default())
}

pub fn solve_increment_fci_with(
    ham: &ActiveSpaceHamiltonian,
    cfg: &DavidsonConfig,
) -> Result<f64, FciError> {
    if ham.n_virt() == 0 || ham.n_occ == 0 {
        return Ok(0.0);
    }
    let e = fci_energy(ham, cfg)?;
    Ok((e - ham.hf_energy()).min(0.0))
}

/// `<S^2>` of a normalized state, from `S^2 = S+ S- + Sz^2 - Sz` with
/// `S- = sum_p a+_{p,beta} a_{p,alpha}`.
pub fn spin_squared(space: &DeterminantSpace, c: &[f64]) -> f64 {
    let n = space.n_orb;
    let mut lowered: HashMap<(u64, u64), f64> = HashMap::new();
    for (i, &ci) in c.iter().enumerate() {
        if ci == 0.0 {
            continue;
        }
        let (a, b) = space.det(i);
        let n_alpha = a.count_ones();
        for p in (0..n).filter(|&p| a & (1 << p) != 0 && b & (1 << p) == 0) {
            // a_{p,alpha} passes the alpha creators below p; a+_{p,beta} then
            // passes the remaining alpha string and the beta creators below p.
            let a1 = a & !(1 << p);
            let flips = (a & ((1 << p) - 1)).count_ones() + (n_alpha - 1) + (b & ((1 << p) - 1)).count_ones();
            let sign = if flips % 2 == 0 { 1.0 } else { -1.0 };
            *lowered.entry((a1, b | (1 << p))).or_insert(0.0) += sign * ci;
        }
    }
    let norm2: f64 = c.iter().map(|x| x * x).sum();
    let sz = 0.5 * (space.n_alpha as f64 - space.n_beta as f64);
    lowered.values().map(|v| v * v).sum::<f64>() / norm2 + sz * sz - sz
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn load(name: &str) -> ActiveSpaceHamiltonian {
        let path = format!("{}/../../fixtures/{name}.fcidump", env!("CARGO_MANIFEST_DIR"));
        let text = std::fs::read_to_string(path).unwrap();
        crate::parse_fcidump(&text).unwrap().full_hamiltonian().unwrap()
    }

    #[test]
    fn string_order_starts_at_reference() {
        assert_eq!(strings(4, 2), vec![0b0011, 0b0101, 0b1001, 0b0110, 0b1010, 0b1100]);
        assert_eq!(strings(3, 0), vec![0]);
        let s = DeterminantSpace::new(5, 2, 1).unwrap();
        assert_eq!(s.len(), 10 * 5);
        assert_eq!(s.det(0), (0b11, 0b1));
    }

    #[test]
    fn one_electron_toy_matches_explicit_matrix() {
        let ham = ActiveSpaceHamiltonian {
            origin: vec![Some(0)],
            n_occ: 0,
            core_energy: 0.3,
            h1: DMatrix::from_row_slice(1, 1, &[-0.8]),
            h2: vec![0.4],
        };
        let space = DeterminantSpace::new(1, 1, 0).unwrap();
        let s = sigma_apply(&ham, &space, &[2.0]).unwrap();
        assert!((s[0] - 2.0 * (-0.8 + 0.3)).abs() < 1e-15);
        assert_eq!(
            sigma_apply(&ham, &space, &[1.0, 2.0]),
            Err(FciError::Shape { expected: 1, got: 2 })
        );
    }

    #[test]
    fn sigma_matches_dense_slater_condon() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for name in ["h2_sto3g", "lih_sto3g"] {
            let ham = load(name);
            let space = DeterminantSpace::for_hamiltonian(&ham).unwrap();
            let h = dense_hamiltonian(&ham, &space);
            for _ in 0..10 {
                let c: Vec<f64> = (0..space.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let s = sigma_apply(&ham, &space, &c).unwrap();
                let d = &h * DVector::from_column_slice(&c);
                for (x, y) in s.iter().zip(d.iter()) {
                    assert!((x - y).abs() < 1e-12, "{name}: {x} vs {y}");
                }
            }
            let diag = diagonal(&ham, &space);
            for (i, d) in diag.iter().enumerate() {
                assert!((d - h[(i, i)]).abs() < 1e-12);
            }
            assert!((h[(0, 0)] - ham.hf_energy()).abs() < 1e-10);
        }
    }

    #[test]
    fn davidson_matches_dense_path() {
        let ham = load("lih_sto3g");
        let space = DeterminantSpace::for_hamiltonian(&ham).unwrap();
        let dense = davidson_lowest(&ham, &space, &DavidsonConfig::default()).unwrap();
        let cfg = DavidsonConfig { dense_threshold: 0, ..Default::default() };
        let iterative = davidson_lowest(&ham, &space, &cfg).unwrap();
        assert!((dense.energy - iterative.energy).abs() < 1e-10);
        assert!(iterative.residual <= 1e-9);
        assert!(spin_squared(&space, &iterative.vector).abs() < 1e-6);
    }

    #[test]
    fn single_determinant_space() {
        let ham = load("h2_sto3g");
        let space = DeterminantSpace::new(ham.n_orb(), 2, 2).unwrap();
        let e = davidson_lowest(&ham, &space, &DavidsonConfig::default()).unwrap();
        let h = dense_hamiltonian(&ham, &space);
        assert_eq!(e.energy, h[(0, 0)]);
        assert!((e.energy - diagonal(&ham, &space)[0]).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let ham = load("h2_sto3g");
        let space = DeterminantSpace::for_hamiltonian(&ham).unwrap();
        let bad = DavidsonConfig { tol: 0.0, ..Default::default() };
        assert!(matches!(davidson_lowest(&ham, &space, &bad), Err(FciError::Config(_))));
        let bad = DavidsonConfig { max_subspace: 1, ..Default::default() };
        assert!(matches!(davidson_lowest(&ham, &space, &bad), Err(FciError::Config(_))));
    }

    #[test]
    fn spin_squared_of_open_shell_pair() {
        // (|a b> - |b a>)/sqrt2 on two orbitals is a singlet; with + it is Ms=0 triplet.
        let space = DeterminantSpace::new(2, 1, 1).unwrap();
        let i1 = space.index_of(0b01, 0b10).unwrap();
        let i2 = space.index_of(0b10, 0b01).unwrap();
        let mut c = vec![0.0; space.len()];
        c[i1] = 1.0;
        c[i2] = 1.0;
        let s_plus = spin_squared(&space, &c);
        c[i2] = -1.0;
        let s_minus = spin_squared(&space, &c);
        let (lo, hi) = if s_plus < s_minus { (s_plus, s_minus) } else { (s_minus, s_plus) };
        assert!(lo.abs() < 1e-12 && (hi - 2.0).abs() < 1e-12);
        let mut hf = vec![0.0; space.len()];
        hf[0] = 1.0;
        assert!(spin_squared(&space, &hf).abs() < 1e-12);
    }
}
