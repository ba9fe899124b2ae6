//! Molecular integrals: FCIDUMP ingestion, spin-orbital views, Fock matrices
//! and frozen-orbital folding into active-space Hamiltonians.
//!
//! Two-electron integrals are stored in chemists' notation `(pq|rs)` over
//! spatial orbitals. Spin orbitals are interleaved: spatial orbital `p` maps
//! to `2p` (alpha) and `2p + 1` (beta).

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::fmt_g;

/// Largest orbital count stored densely (`n^4` two-electron table).
pub const MAX_DENSE_ORBITALS: usize = 64;

/// Tolerance used when checking duplicated FCIDUMP entries.
const DUPLICATE_TOL: f64 = 1e-10;

/// Values at or below this magnitude are not written by [`IntegralStore::to_fcidump`].
const WRITE_TOL: f64 = 1e-15;

#[derive(Debug, Error, PartialEq)]
pub enum IntegralError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("index {index} out of range [1, {norb}] at line {line}")]
    Index { line: usize, index: i64, norb: usize },
    #[error("conflicting duplicate integral at line {line}: {old} vs {new}")]
    Consistency { line: usize, old: f64, new: f64 },
    #[error("{norb} orbitals exceed the dense storage cap of {MAX_DENSE_ORBITALS}")]
    Capacity { norb: usize },
    #[error("invalid occupation: {0}")]
    InvalidOccupation(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("spin-orbital index {index} out of range for {n_spin} spin orbitals")]
    SpinIndex { index: usize, n_spin: usize },
}

/// Alpha or beta spin label of a spin orbital.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Spin {
    Alpha,
    Beta,
}

/// Interleaved spin-orbital indexing helpers.
pub mod spin_orbital {
    use super::Spin;

    #[inline]
    pub fn spatial(p: usize) -> usize {
        p / 2
    }

    #[inline]
    pub fn spin(p: usize) -> Spin {
        if p.is_multiple_of(2) {
            Spin::Alpha
        } else {
            Spin::Beta
        }
    }

    #[inline]
    pub fn index(spatial: usize, spin: Spin) -> usize {
        2 * spatial + usize::from(spin == Spin::Beta)
    }
}

/// Spatial-orbital integrals with core energy, expanded to full 8-fold symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralStore {
    n_orb: usize,
    n_electrons: usize,
    ms2: i64,
    orbsym: Vec<i64>,
    isym: i64,
    core_energy: f64,
    h1: Vec<f64>,
    h2: Vec<f64>,
}

impl IntegralStore {
    /// Empty store (all integrals zero).
    pub fn new(n_orb: usize, n_electrons: usize) -> Result<Self, IntegralError> {
        if n_orb > MAX_DENSE_ORBITALS {
            return Err(IntegralError::Capacity { norb: n_orb });
        }
        Ok(Self {
            n_orb,
            n_electrons,
            ms2: 0,
            orbsym: vec![1; n_orb],
            isym: 1,
            core_energy: 0.0,
            h1: vec![0.0; n_orb * n_orb],
            h2: vec![0.0; n_orb.pow(4)],
        })
    }

    pub fn n_orb(&self) -> usize {
        self.n_orb
    }

    pub fn n_spin(&self) -> usize {
        2 * self.n_orb
    }

    pub fn n_electrons(&self) -> usize {
        self.n_electrons
    }

    pub fn ms2(&self) -> i64 {
        self.ms2
    }

    /// Doubly occupied spatial orbitals of the closed-shell reference.
    pub fn n_occupied(&self) -> usize {
        self.n_electrons / 2
    }

    pub fn core_energy(&self) -> f64 {
        self.core_energy
    }

    pub fn set_core_energy(&mut self, e: f64) {
        self.core_energy = e;
    }

    #[inline]
    pub fn h1(&self, p: usize, q: usize) -> f64 {
        self.h1[p * self.n_orb + q]
    }

    /// Sets `h[p][q]` and `h[q][p]`.
    pub fn set_h1(&mut self, p: usize, q: usize, v: f64) {
        let n = self.n_orb;
        self.h1[p * n + q] = v;
        self.h1[q * n + p] = v;
    }

    #[inline]
    fn idx4(&self, p: usize, q: usize, r: usize, s: usize) -> usize {
        let n = self.n_orb;
        ((p * n + q) * n + r) * n + s
    }

    /// Chemists' notation `(pq|rs)`.
    #[inline]
    pub fn eri(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        self.h2[self.idx4(p, q, r, s)]
    }

    /// Sets `(pq|rs)` and all its 8-fold symmetry partners.
    pub fn set_eri(&mut self, p: usize, q: usize, r: usize, s: usize, v: f64) {
        for (a, b, c, d) in eri_partners(p, q, r, s) {
            let i = self.idx4(a, b, c, d);
            self.h2[i] = v;
        }
    }

    /// One-electron matrix as a dense spatial matrix.
    pub fn h1_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_orb, self.n_orb, &self.h1)
    }

    /// Raw `(pq|rs)` table, row-major over `p, q, r, s`.
    pub fn eri_table(&self) -> &[f64] {
        &self.h2
    }

    /// Physicists' `<PQ|RS> = (pr|qs)` for spin orbitals, zero unless spins match.
    #[inline]
    pub fn phys_eri(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        use spin_orbital::{spatial, spin};
        if spin(p) != spin(r) || spin(q) != spin(s) {
            return 0.0;
        }
        self.eri(spatial(p), spatial(r), spatial(q), spatial(s))
    }

    /// Antisymmetrized `<PQ||RS> = <PQ|RS> - <PQ|SR>` over spin orbitals.
    pub fn antisym_eri(&self, p: usize, q: usize, r: usize, s: usize) -> Result<f64, IntegralError> {
        let n_spin = self.n_spin();
        if let Some(&index) = [p, q, r, s].iter().find(|&&i| i >= n_spin) {
            return Err(IntegralError::SpinIndex { index, n_spin });
        }
        Ok(self.antisym(p, q, r, s))
    }

    #[inline]
    pub(crate) fn antisym(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        self.phys_eri(p, q, r, s) - self.phys_eri(p, q, s, r)
    }

    /// Spin-orbital one-electron integral `h_PQ`.
    #[inline]
    pub fn h1_spin(&self, p: usize, q: usize) -> f64 {
        use spin_orbital::{spatial, spin};
        if spin(p) != spin(q) {
            0.0
        } else {
            self.h1(spatial(p), spatial(q))
        }
    }

    /// Spin orbitals occupied in the closed-shell (aufbau) reference.
    pub fn reference_occupation(&self) -> Vec<usize> {
        (0..self.n_electrons).collect()
    }

    /// Fock matrix over spin orbitals for an occupied spin-orbital set.
    pub fn build_fock(&self, occupied: &[usize]) -> Result<FockMatrix, IntegralError> {
        let n_spin = self.n_spin();
        if occupied.len() != self.n_electrons {
            return Err(IntegralError::InvalidOccupation(format!(
                "{} occupied spin orbitals for {} electrons",
                occupied.len(),
                self.n_electrons
            )));
        }
        let set: BTreeSet<usize> = occupied.iter().copied().collect();
        if set.len() != occupied.len() {
            return Err(IntegralError::InvalidOccupation("duplicate spin orbital".into()));
        }
        if let Some(&index) = set.iter().find(|&&i| i >= n_spin) {
            return Err(IntegralError::SpinIndex { index, n_spin });
        }
        let mut f = DMatrix::zeros(n_spin, n_spin);
        for p in 0..n_spin {
            for q in p..n_spin {
                let mut v = self.h1_spin(p, q);
                for &i in &set {
                    v += self.antisym(p, i, q, i);
                }
                f[(p, q)] = v;
                f[(q, p)] = v;
            }
        }
        let mut e_hf = self.core_energy;
        for &i in &set {
            e_hf += self.h1_spin(i, i);
        }
        let mut two = 0.0;
        for &i in &set {
            for &j in &set {
                two += self.antisym(i, j, i, j);
            }
        }
        e_hf += 0.5 * two;
        let diagonal = (0..n_spin).map(|p| f[(p, p)]).collect();
        Ok(FockMatrix { f, diagonal, e_hf })
    }

    /// Hartree-Fock energy of the closed-shell reference.
    pub fn hf_energy(&self) -> f64 {
        let n_occ = self.n_occupied();
        let mut e = self.core_energy;
        for k in 0..n_occ {
            e += 2.0 * self.h1(k, k);
            for l in 0..n_occ {
                e += 2.0 * self.eri(k, k, l, l) - self.eri(k, l, l, k);
            }
        }
        e
    }

    /// Folds doubly occupied `frozen` spatial orbitals into a mean field acting
    /// on the `active` spatial orbitals.
    ///
    /// The active list is reordered occupied-first (stable within each block)
    /// so the reference determinant is the lowest-index occupation.
    pub fn fold_frozen(
        &self,
        frozen: &[usize],
        active: &[usize],
    ) -> Result<ActiveSpaceHamiltonian, IntegralError> {
        let n = self.n_orb;
        let n_occ = self.n_occupied();
        if !self.n_electrons.is_multiple_of(2) || self.ms2 != 0 {
            return Err(IntegralError::InvalidOccupation(
                "folding requires a closed-shell reference".into(),
            ));
        }
        let frozen_set: BTreeSet<usize> = frozen.iter().copied().collect();
        let active_set: BTreeSet<usize> = active.iter().copied().collect();
        if frozen_set.len() != frozen.len() || active_set.len() != active.len() {
            return Err(IntegralError::InvalidPartition("repeated orbital".into()));
        }
        if let Some(&p) = frozen_set.iter().chain(active_set.iter()).find(|&&p| p >= n) {
            return Err(IntegralError::InvalidPartition(format!("orbital {p} out of range")));
        }
        if let Some(p) = frozen_set.intersection(&active_set).next() {
            return Err(IntegralError::InvalidPartition(format!(
                "orbital {p} is both frozen and active"
            )));
        }
        if let Some(p) = frozen_set.iter().find(|&&p| p >= n_occ) {
            return Err(IntegralError::InvalidPartition(format!(
                "frozen orbital {p} is not occupied"
            )));
        }
        for k in 0..n_occ {
            if !frozen_set.contains(&k) && !active_set.contains(&k) {
                return Err(IntegralError::InvalidPartition(format!(
                    "occupied orbital {k} is neither frozen nor active"
                )));
            }
        }

        let mut ordered: Vec<usize> = active.iter().copied().filter(|&p| p < n_occ).collect();
        let n_act_occ = ordered.len();
        ordered.extend(active.iter().copied().filter(|&p| p >= n_occ));

        let mut core = self.core_energy;
        for &k in &frozen_set {
            core += 2.0 * self.h1(k, k);
            for &l in &frozen_set {
                core += 2.0 * self.eri(k, k, l, l) - self.eri(k, l, l, k);
            }
        }

        let m = ordered.len();
        let mut h1 = DMatrix::zeros(m, m);
        for (a, &p) in ordered.iter().enumerate() {
            for (b, &q) in ordered.iter().enumerate() {
                let mut v = self.h1(p, q);
                for &k in &frozen_set {
                    v += 2.0 * self.eri(p, q, k, k) - self.eri(p, k, k, q);
                }
                h1[(a, b)] = v;
            }
        }
        let mut h2 = vec![0.0; m.pow(4)];
        for (a, &p) in ordered.iter().enumerate() {
            for (b, &q) in ordered.iter().enumerate() {
                for (c, &r) in ordered.iter().enumerate() {
                    for (d, &s) in ordered.iter().enumerate() {
                        h2[((a * m + b) * m + c) * m + d] = self.eri(p, q, r, s);
                    }
                }
            }
        }
        Ok(ActiveSpaceHamiltonian {
            origin: ordered.into_iter().map(Some).collect(),
            n_occ: n_act_occ,
            core_energy: core,
            h1,
            h2,
        })
    }

    /// The whole system as an active space with nothing frozen.
    pub fn full_hamiltonian(&self) -> Result<ActiveSpaceHamiltonian, IntegralError> {
        let all: Vec<usize> = (0..self.n_orb).collect();
        self.fold_frozen(&[], &all)
    }

    /// Serializes in the PySCF FCIDUMP layout (`%.16g` values, 8-fold
    /// canonical two-electron entries, then one-electron entries, then core).
    pub fn to_fcidump(&self) -> String {
        let n = self.n_orb;
        let mut out = String::new();
        let _ = writeln!(
            out,
            " &FCI NORB={:>4},NELEC={:>2},MS2={},",
            n, self.n_electrons, self.ms2
        );
        let mut orbsym = String::new();
        for s in &self.orbsym {
            let _ = write!(orbsym, "{s},");
        }
        let _ = writeln!(out, "  ORBSYM={orbsym}");
        let _ = writeln!(out, "  ISYM={},", self.isym);
        out.push_str(" &END\n");
        for i in 0..n {
            for j in 0..=i {
                let ij = i * (i + 1) / 2 + j;
                for k in 0..=i {
                    for l in 0..=k {
                        let kl = k * (k + 1) / 2 + l;
                        if ij < kl {
                            continue;
                        }
                        let v = self.eri(i, j, k, l);
                        if v.abs() > WRITE_TOL {
                            let _ = writeln!(
                                out,
                                " {} {:>4} {:>4} {:>4} {:>4}",
                                fmt_g(v, 16),
                                i + 1,
                                j + 1,
                                k + 1,
                                l + 1
                            );
                        }
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..=i {
                let v = self.h1(i, j);
                if v.abs() > WRITE_TOL {
                    let _ = writeln!(out, " {} {:>4} {:>4}  0  0", fmt_g(v, 16), i + 1, j + 1);
                }
            }
        }
        let _ = writeln!(out, " {}  0  0  0  0", fmt_g(self.core_energy, 16));
        out
    }
}

/// The eight index permutations sharing the value of `(pq|rs)` for real orbitals.
fn eri_partners(p: usize, q: usize, r: usize, s: usize) -> [(usize, usize, usize, usize); 8] {
    [
        (p, q, r, s),
        (q, p, r, s),
        (p, q, s, r),
        (q, p, s, r),
        (r, s, p, q),
        (s, r, p, q),
        (r, s, q, p),
        (s, r, q, p),
    ]
}

/// Parses Molpro-convention FCIDUMP text.
///
/// The header is a Fortran namelist opened by `&FCI` and closed by `&END`,
/// `/END` or a lone `/`. Body lines are `value i j k l` with 1-based indices;
/// `(i j 0 0)` is a one-electron integral, `(0 0 0 0)` the core energy and
/// `(i 0 0 0)` an orbital energy (ignored).
pub fn parse_fcidump(text: &str) -> Result<IntegralStore, IntegralError> {
    let mut lines = text.lines().enumerate();
    let mut header = String::new();
    let mut header_closed = false;
    for (_, line) in lines.by_ref() {
        let trimmed = line.trim();
        let upper = trimmed.to_ascii_uppercase();
        if upper.ends_with("&END") || upper.ends_with("/END") || upper == "/" {
            let body = &trimmed[..trimmed.len() - if upper == "/" { 1 } else { 4 }];
            header.push_str(body);
            header_closed = true;
            break;
        }
        header.push_str(trimmed);
        header.push(' ');
    }
    if !header_closed {
        return Err(IntegralError::Parse { line: 0, msg: "unterminated namelist header".into() });
    }
    let fields = parse_namelist(&header)?;
    let get = |key: &str| -> Option<&Vec<i64>> { fields.iter().find(|(k, _)| k == key).map(|(_, v)| v) };
    let scalar = |key: &str| -> Result<i64, IntegralError> {
        match get(key) {
            Some(v) if v.len() == 1 => Ok(v[0]),
            Some(_) => Err(IntegralError::Parse { line: 0, msg: format!("{key} must be a scalar") }),
            None => Err(IntegralError::Parse { line: 0, msg: format!("missing {key}") }),
        }
    };
    let norb = scalar("NORB")?;
    let nelec = scalar("NELEC")?;
    if norb < 0 || nelec < 0 {
        return Err(IntegralError::Parse { line: 0, msg: "negative NORB or NELEC".into() });
    }
    let norb = norb as usize;
    let mut store = IntegralStore::new(norb, nelec as usize)?;
    store.ms2 = get("MS2").and_then(|v| v.first().copied()).unwrap_or(0);
    store.isym = get("ISYM").and_then(|v| v.first().copied()).unwrap_or(1);
    if let Some(sym) = get("ORBSYM") {
        store.orbsym = sym.clone();
    }

    let mut seen_h1 = vec![false; norb * norb];
    let mut seen_h2 = vec![false; norb.pow(4)];
    let mut seen_core = false;
    for (lineno, line) in lines {
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let value = parts
            .next()
            .map(|t| t.replace(['D', 'd'], "E"))
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or_else(|| IntegralError::Parse { line: lineno, msg: "bad value".into() })?;
        let mut idx = [0i64; 4];
        for slot in idx.iter_mut() {
            *slot = parts
                .next()
                .and_then(|t| t.parse::<i64>().ok())
                .ok_or_else(|| IntegralError::Parse { line: lineno, msg: "bad index".into() })?;
        }
        if parts.next().is_some() {
            return Err(IntegralError::Parse { line: lineno, msg: "trailing tokens".into() });
        }
        for &i in &idx {
            if i < 0 || i > norb as i64 {
                return Err(IntegralError::Index { line: lineno, index: i, norb });
            }
        }
        let [i, j, k, l] = idx.map(|x| x as usize);
        match (i, j, k, l) {
            (0, 0, 0, 0) => {
                if seen_core && (store.core_energy - value).abs() > DUPLICATE_TOL {
                    return Err(IntegralError::Consistency { line: lineno, old: store.core_energy, new: value });
                }
                seen_core = true;
                store.core_energy = value;
            }
            (_, 0, 0, 0) => {}
            (i, j, 0, 0) if i > 0 && j > 0 => {
                let (p, q) = (i - 1, j - 1);
                if seen_h1[p * norb + q] && (store.h1(p, q) - value).abs() > DUPLICATE_TOL {
                    return Err(IntegralError::Consistency { line: lineno, old: store.h1(p, q), new: value });
                }
                seen_h1[p * norb + q] = true;
                seen_h1[q * norb + p] = true;
                store.set_h1(p, q, value);
            }
            (i, j, k, l) if i > 0 && j > 0 && k > 0 && l > 0 => {
                let (p, q, r, s) = (i - 1, j - 1, k - 1, l - 1);
                let at = store.idx4(p, q, r, s);
                if seen_h2[at] && (store.h2[at] - value).abs() > DUPLICATE_TOL {
                    return Err(IntegralError::Consistency { line: lineno, old: store.h2[at], new: value });
                }
                for (a, b, c, d) in eri_partners(p, q, r, s) {
                    seen_h2[store.idx4(a, b, c, d)] = true;
                }
                store.set_eri(p, q, r, s, value);
            }
            _ => {
                return Err(IntegralError::Parse {
                    line: lineno,
                    msg: format!("unsupported index pattern {i} {j} {k} {l}"),
                })
            }
        }
    }
    Ok(store)
}

/// Splits a namelist body (`&FCI` already included or not) into `KEY = values`.
fn parse_namelist(header: &str) -> Result<Vec<(String, Vec<i64>)>, IntegralError> {
    let body = header.trim();
    let body = body
        .strip_prefix('&')
        .map(|b| b.trim_start_matches(|c: char| c.is_ascii_alphabetic()))
        .unwrap_or(body);
    let mut fields: Vec<(String, Vec<i64>)> = Vec::new();
    // Tokenize on '=' boundaries: the token right before '=' is a key, the
    // text between two keys is the value list of the first one.
    let pieces: Vec<&str> = body.split('=').collect();
    if pieces.len() < 2 {
        return Err(IntegralError::Parse { line: 0, msg: "no KEY=value pairs in header".into() });
    }
    let mut key = pieces[0].trim().trim_matches(',').trim().to_ascii_uppercase();
    for (n, piece) in pieces.iter().enumerate().skip(1) {
        let (values, next_key) = if n + 1 < pieces.len() {
            let cut = piece
                .trim_end()
                .rfind(|c: char| c == ',' || c.is_whitespace())
                .map(|i| i + 1)
                .unwrap_or(0);
            (&piece[..cut], piece[cut..].trim().to_ascii_uppercase())
        } else {
            (*piece, String::new())
        };
        let mut parsed = Vec::new();
        for tok in values.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let v = tok.parse::<i64>().map_err(|_| IntegralError::Parse {
                line: 0,
                msg: format!("bad value {tok:?} for {key}"),
            })?;
            parsed.push(v);
        }
        if key.is_empty() {
            return Err(IntegralError::Parse { line: 0, msg: "empty namelist key".into() });
        }
        fields.push((key, parsed));
        key = next_key;
    }
    Ok(fields)
}

/// Spin-orbital Fock matrix and the Hartree-Fock energy of the occupation
/// it was built from.
#[derive(Debug, Clone)]
pub struct FockMatrix {
    pub f: DMatrix<f64>,
    pub diagonal: Vec<f64>,
    pub e_hf: f64,
}

/// Closed-shell Hamiltonian over an ordered set of active spatial orbitals,
/// dressed by the mean field of folded (frozen) occupied orbitals.
///
/// The first `n_occ` orbitals are doubly occupied in the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSpaceHamiltonian {
    /// Source spatial orbital of each active orbital; `None` once rotated.
    pub origin: Vec<Option<usize>>,
    pub n_occ: usize,
    pub core_energy: f64,
    pub h1: DMatrix<f64>,
    /// `(pq|rs)` over active orbitals, row-major.
    pub h2: Vec<f64>,
}

impl ActiveSpaceHamiltonian {
    pub fn n_orb(&self) -> usize {
        self.h1.nrows()
    }

    pub fn n_spin(&self) -> usize {
        2 * self.n_orb()
    }

    pub fn n_virt(&self) -> usize {
        self.n_orb() - self.n_occ
    }

    pub fn n_electrons(&self) -> usize {
        2 * self.n_occ
    }

    #[inline]
    pub fn eri(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        let n = self.n_orb();
        self.h2[((p * n + q) * n + r) * n + s]
    }

    #[inline]
    pub fn phys_eri(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        use spin_orbital::{spatial, spin};
        if spin(p) != spin(r) || spin(q) != spin(s) {
            return 0.0;
        }
        self.eri(spatial(p), spatial(r), spatial(q), spatial(s))
    }

    /// `<PQ||RS>` over active spin orbitals.
    #[inline]
    pub fn antisym(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        self.phys_eri(p, q, r, s) - self.phys_eri(p, q, s, r)
    }

    #[inline]
    pub fn h1_spin(&self, p: usize, q: usize) -> f64 {
        use spin_orbital::{spatial, spin};
        if spin(p) != spin(q) {
            0.0
        } else {
            self.h1[(spatial(p), spatial(q))]
        }
    }

    pub fn occupied_spin_orbitals(&self) -> Vec<usize> {
        (0..2 * self.n_occ).collect()
    }

    pub fn virtual_spin_orbitals(&self) -> Vec<usize> {
        (2 * self.n_occ..self.n_spin()).collect()
    }

    /// Closed-shell Fock matrix over active spatial orbitals.
    pub fn fock(&self) -> DMatrix<f64> {
        let n = self.n_orb();
        let mut f = self.h1.clone();
        for p in 0..n {
            for q in 0..n {
                let mut v = 0.0;
                for k in 0..self.n_occ {
                    v += 2.0 * self.eri(p, q, k, k) - self.eri(p, k, k, q);
                }
                f[(p, q)] += v;
            }
        }
        f
    }

    /// Energy of the reference determinant.
    pub fn hf_energy(&self) -> f64 {
        let mut e = self.core_energy;
        for k in 0..self.n_occ {
            e += 2.0 * self.h1[(k, k)];
            for l in 0..self.n_occ {
                e += 2.0 * self.eri(k, k, l, l) - self.eri(k, l, l, k);
            }
        }
        e
    }

    /// Rotates into new orbitals given as columns of `c` (old x new); the
    /// first `n_occ_new` new orbitals are the occupied ones.
    pub fn transform(&self, c: &DMatrix<f64>, n_occ_new: usize) -> ActiveSpaceHamiltonian {
        let n = self.n_orb();
        let m = c.ncols();
        assert_eq!(c.nrows(), n, "transform rows must match active orbitals");
        let h1 = c.transpose() * &self.h1 * c;
        // Four quarter transformations, one index at a time.
        let mut cur = self.h2.clone();
        let mut dims = [n, n, n, n];
        for axis in 0..4 {
            let mut nd = dims;
            nd[axis] = m;
            let mut next = vec![0.0; nd.iter().product()];
            let stride_old: usize = dims[axis + 1..].iter().product();
            let stride_new: usize = nd[axis + 1..].iter().product();
            let outer: usize = dims[..axis].iter().product();
            for o in 0..outer {
                for inner in 0..stride_old {
                    for a in 0..dims[axis] {
                        let v = cur[(o * dims[axis] + a) * stride_old + inner];
                        if v == 0.0 {
                            continue;
                        }
                        for b in 0..m {
                            next[(o * m + b) * stride_new + inner] += c[(a, b)] * v;
                        }
                    }
                }
            }
            cur = next;
            dims = nd;
        }
        ActiveSpaceHamiltonian {
            origin: vec![None; m],
            n_occ: n_occ_new,
            core_energy: self.core_energy,
            h1,
            h2: cur,
        }
    }
}
