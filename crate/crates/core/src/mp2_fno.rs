//! Second-order perturbation theory and frozen natural orbitals.
//!
//! Everything here works in the spin-orbital basis of an
//! [`ActiveSpaceHamiltonian`]; occupied and virtual labels are active
//! spin-orbital indices. The virtual-virtual block of the MP2 one-particle
//! density is diagonalized to obtain natural orbitals, which are ranked by
//! occupation, truncated, and used to rotate the virtual space.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrals::{spin_orbital, ActiveSpaceHamiltonian, Spin};

/// Denominators smaller than this with a nonzero numerator are rejected.
pub const DEGENERACY_TOL: f64 = 1e-8;
/// Eigenvalues in `[-CLAMP_TOL, 0)` are set to zero.
pub const CLAMP_TOL: f64 = 1e-10;
/// Eigenvalues closer than this are treated as degenerate when ordering.
pub const TIE_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum Mp2Error {
    #[error("vanishing denominator {denominator:e} for excitation {occ:?} -> {virt:?}")]
    Degeneracy {
        occ: (usize, usize),
        virt: (usize, usize),
        denominator: f64,
    },
    #[error("invalid truncation policy: {0}")]
    Policy(String),
    #[error("FNO subspace does not match the Hamiltonian: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mp2Result {
    pub e2: f64,
    /// Pair energies keyed by `(I, J)` with `I < J`.
    pub pair_energies: BTreeMap<(usize, usize), f64>,
}

/// Spin-orbital Fock diagonal of the Hamiltonian's reference.
fn fock_diagonal(ham: &ActiveSpaceHamiltonian) -> Vec<f64> {
    let f = ham.fock();
    (0..ham.n_spin()).map(|p| f[(spin_orbital::spatial(p), spin_orbital::spatial(p))]).collect()
}

/// `E2 = 1/4 sum |<IJ||AB>|^2 / (f_II + f_JJ - f_AA - f_BB)`.
pub fn mp2_energy(
    ham: &ActiveSpaceHamiltonian,
    occ: &[usize],
    virt: &[usize],
) -> Result<Mp2Result, Mp2Error> {
    let f = fock_diagonal(ham);
    let mut pair_energies = BTreeMap::new();
    let mut e2 = 0.0;
    for (x, &i) in occ.iter().enumerate() {
        for &j in &occ[x + 1..] {
            let mut e_ij = 0.0;
            for (y, &a) in virt.iter().enumerate() {
                for &b in &virt[y + 1..] {
                    let num = ham.antisym(i, j, a, b);
                    if num == 0.0 {
                        continue;
                    }
                    let den = f[i] + f[j] - f[a] - f[b];
                    if den.abs() < DEGENERACY_TOL {
                        return Err(Mp2Error::Degeneracy { occ: (i, j), virt: (a, b), denominator: den });
                    }
                    e_ij += num * num / den;
                }
            }
            let key = (i.min(j), i.max(j));
            pair_energies.insert(key, e_ij);
            e2 += e_ij;
        }
    }
    Ok(Mp2Result { e2, pair_energies })
}

/// First-order doubles amplitudes `t_ij^ab = <ij||ab> / e_ij^ab`, stored as a
/// dense antisymmetric tensor over `(occ, occ, virt, virt)` positions.
#[derive(Debug, Clone)]
pub struct FirstOrderAmplitudes {
    pub occ: Vec<usize>,
    pub virt: Vec<usize>,
    t: Vec<f64>,
}

impl FirstOrderAmplitudes {
    pub fn new(ham: &ActiveSpaceHamiltonian, occ: &[usize], virt: &[usize]) -> Result<Self, Mp2Error> {
        let f = fock_diagonal(ham);
        let (no, nv) = (occ.len(), virt.len());
        let mut t = vec![0.0; no * no * nv * nv];
        for (x, &i) in occ.iter().enumerate() {
            for (y, &j) in occ.iter().enumerate() {
                for (z, &a) in virt.iter().enumerate() {
                    for (w, &b) in virt.iter().enumerate() {
                        let num = ham.antisym(i, j, a, b);
                        if num == 0.0 {
                            continue;
                        }
                        let den = f[i] + f[j] - f[a] - f[b];
                        if den.abs() < DEGENERACY_TOL {
                            return Err(Mp2Error::Degeneracy { occ: (i, j), virt: (a, b), denominator: den });
                        }
                        t[((x * no + y) * nv + z) * nv + w] = num / den;
                    }
                }
            }
        }
        Ok(Self { occ: occ.to_vec(), virt: virt.to_vec(), t })
    }

    /// Amplitude by position in the `occ` / `virt` lists.
    #[inline]
    pub fn get(&self, i: usize, j: usize, a: usize, b: usize) -> f64 {
        let (no, nv) = (self.occ.len(), self.virt.len());
        self.t[((i * no + j) * nv + a) * nv + b]
    }
}

/// Virtual-virtual block of the MP2 one-particle density.
#[derive(Debug, Clone, PartialEq)]
pub struct VvDensityBlock {
    pub d: DMatrix<f64>,
    /// Virtual spin-orbital labels of the rows and columns of `d`.
    pub virt: Vec<usize>,
    pub occupied_context: Vec<usize>,
}

/// `D_ab = 1/2 sum_{cij} <cb||ij><ij||ca> / (e_ij^cb e_ij^ca)`.
pub fn vv_density(
    ham: &ActiveSpaceHamiltonian,
    occ: &[usize],
    virt: &[usize],
) -> Result<VvDensityBlock, Mp2Error> {
    let nv = virt.len();
    let mut d = DMatrix::zeros(nv, nv);
    if !occ.is_empty() && nv > 0 {
        let amps = FirstOrderAmplitudes::new(ham, occ, virt)?;
        let no = occ.len();
        // Rows indexed by (i, j, c): D = 1/2 M^T M with M[(ijc), a] = t_ij^ca.
        let mut m = DMatrix::zeros(no * no * nv, nv);
        for i in 0..no {
            for j in 0..no {
                for c in 0..nv {
                    let row = (i * no + j) * nv + c;
                    for a in 0..nv {
                        m[(row, a)] = amps.get(i, j, c, a);
                    }
                }
            }
        }
        d = m.transpose() * &m * 0.5;
        d = (&d + d.transpose()) * 0.5;
    }
    Ok(VvDensityBlock { d, virt: virt.to_vec(), occupied_context: occ.to_vec() })
}

/// Occupation-based truncation rule for the natural-orbital virtual space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FnoPolicy {
    /// Keep the smallest leading set whose cumulative occupation reaches this
    /// fraction of the total.
    Occupancy(f64),
    /// Keep this many virtual spatial orbitals (each with both spins).
    KeepCount(usize),
}

impl FnoPolicy {
    pub fn tag(&self) -> String {
        match self {
            FnoPolicy::Occupancy(t) => format!("occupancy={t}"),
            FnoPolicy::KeepCount(k) => format!("keep_count={k}"),
        }
    }
}

/// Natural orbitals of a virtual space, ordered by descending occupation.
///
/// Column `k` of `u` expresses natural orbital `k` in the canonical virtual
/// spin orbitals `virt`. The first `kept` columns are retained.
#[derive(Debug, Clone, PartialEq)]
pub struct FnoSubspace {
    pub virt: Vec<usize>,
    pub eigenvalues: Vec<f64>,
    pub spins: Vec<Spin>,
    pub u: DMatrix<f64>,
    pub kept: usize,
    pub occupancy_fraction: f64,
}

impl FnoSubspace {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Kept virtual spatial orbitals (alpha count).
    pub fn kept_spatial(&self) -> usize {
        self.spins[..self.kept].iter().filter(|&&s| s == Spin::Alpha).count()
    }

    /// Virtual spatial orbitals before truncation.
    pub fn dim_spatial(&self) -> usize {
        self.spins.iter().filter(|&&s| s == Spin::Alpha).count()
    }

    /// Same natural orbitals with the leading `kept_spatial` alpha and beta
    /// orbitals retained, without policy validation.
    pub fn with_kept_spatial(&self, kept_spatial: usize) -> FnoSubspace {
        select_per_spin(self, kept_spatial)
    }

    /// Spatial transformation (canonical virtual spatial x kept spatial) read
    /// from the alpha natural orbitals.
    pub fn spatial_transform(&self) -> Result<DMatrix<f64>, Mp2Error> {
        let alpha_rows: Vec<usize> = self
            .virt
            .iter()
            .enumerate()
            .filter(|(_, &v)| spin_orbital::spin(v) == Spin::Alpha)
            .map(|(r, _)| r)
            .collect();
        let alpha_cols: Vec<usize> =
            (0..self.kept).filter(|&k| self.spins[k] == Spin::Alpha).collect();
        let beta_count = (0..self.kept).filter(|&k| self.spins[k] == Spin::Beta).count();
        if beta_count != alpha_cols.len() {
            return Err(Mp2Error::Mismatch("kept set is not spin paired".into()));
        }
        let mut t = DMatrix::zeros(alpha_rows.len(), alpha_cols.len());
        for (c, &k) in alpha_cols.iter().enumerate() {
            for (r, &row) in alpha_rows.iter().enumerate() {
                t[(r, c)] = self.u[(row, k)];
            }
        }
        Ok(t)
    }
}

/// Diagonalizes the density; all natural orbitals are kept.
///
/// Spin blocks are diagonalized separately when the density has no
/// cross-spin coupling, so every natural orbital has a definite spin.
/// Ties in occupation are ordered by the index of the eigenvector's
/// dominant component.
pub fn fno_decompose(block: &VvDensityBlock) -> FnoSubspace {
    let n = block.virt.len();
    let d = &block.d;
    let spin_of = |r: usize| spin_orbital::spin(block.virt[r]);
    let cross = (0..n)
        .flat_map(|r| (0..n).map(move |c| (r, c)))
        .filter(|&(r, c)| spin_of(r) != spin_of(c))
        .map(|(r, c)| d[(r, c)].abs())
        .fold(0.0, f64::max);

    let mut pairs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(n);
    let groups: Vec<Vec<usize>> = if cross <= 1e-12 {
        [Spin::Alpha, Spin::Beta]
            .iter()
            .map(|&s| (0..n).filter(|&r| spin_of(r) == s).collect::<Vec<_>>())
            .filter(|g| !g.is_empty())
            .collect()
    } else {
        vec![(0..n).collect()]
    };
    for rows in &groups {
        let m = rows.len();
        let sub = DMatrix::from_fn(m, m, |a, b| d[(rows[a], rows[b])]);
        let eig = sub.symmetric_eigen();
        for k in 0..m {
            let mut v = vec![0.0; n];
            for (a, &r) in rows.iter().enumerate() {
                v[r] = eig.eigenvectors[(a, k)];
            }
            let mut lambda = eig.eigenvalues[k];
            if (-CLAMP_TOL..0.0).contains(&lambda) {
                lambda = 0.0;
            }
            pairs.push((lambda, v));
        }
    }

    let dominant = |v: &[f64]| -> usize {
        let mut best = 0;
        for (i, x) in v.iter().enumerate() {
            if x.abs() > v[best].abs() + 1e-12 {
                best = i;
            }
        }
        best
    };
    let mut order: Vec<(f64, usize, usize)> =
        pairs.iter().enumerate().map(|(k, (l, v))| (*l, dominant(v), k)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    // Re-sort runs of near-equal occupations by dominant index.
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && (order[end - 1].0 - order[end].0).abs() <= TIE_TOL {
            end += 1;
        }
        order[start..end].sort_by_key(|&(_, dom, _)| dom);
        start = end;
    }

    let mut u = DMatrix::zeros(n, n);
    let mut eigenvalues = Vec::with_capacity(n);
    let mut spins = Vec::with_capacity(n);
    for (col, &(lambda, dom, k)) in order.iter().enumerate() {
        let v = &pairs[k].1;
        let sign = if v[dom] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            u[(r, col)] = sign * v[r];
        }
        eigenvalues.push(lambda);
        spins.push(spin_of(dom));
    }
    FnoSubspace {
        virt: block.virt.clone(),
        eigenvalues,
        spins,
        u,
        kept: n,
        occupancy_fraction: 1.0,
    }
}

/// Keeps the leading `k` natural orbitals of each spin, placed first.
fn select_per_spin(s: &FnoSubspace, k: usize) -> FnoSubspace {
    let n = s.dim();
    let mut taken = [0usize; 2];
    let mut kept_cols = Vec::new();
    let mut rest = Vec::new();
    for c in 0..n {
        let slot = usize::from(s.spins[c] == Spin::Beta);
        if taken[slot] < k {
            taken[slot] += 1;
            kept_cols.push(c);
        } else {
            rest.push(c);
        }
    }
    let kept = kept_cols.len();
    let cols: Vec<usize> = kept_cols.into_iter().chain(rest).collect();
    let u = DMatrix::from_fn(n, n, |r, c| s.u[(r, cols[c])]);
    let eigenvalues: Vec<f64> = cols.iter().map(|&c| s.eigenvalues[c]).collect();
    let spins = cols.iter().map(|&c| s.spins[c]).collect();
    let total: f64 = eigenvalues.iter().sum();
    let occupancy_fraction = if kept == n || total <= 0.0 {
        1.0
    } else {
        (eigenvalues[..kept].iter().sum::<f64>() / total).clamp(0.0, 1.0)
    };
    FnoSubspace { virt: s.virt.clone(), eigenvalues, spins, u, kept, occupancy_fraction }
}

/// Applies a truncation policy. Alpha and beta natural orbitals are kept in
/// equal numbers, rounding the kept set up.
pub fn fno_truncate(s: &FnoSubspace, policy: FnoPolicy) -> Result<FnoSubspace, Mp2Error> {
    let dim_spatial = s.dim_spatial();
    let k = match policy {
        FnoPolicy::Occupancy(tau) => {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(Mp2Error::Policy(format!("occupancy {tau} not in (0, 1]")));
            }
            if tau == 1.0 {
                s.dim()
            } else {
                let total: f64 = s.eigenvalues.iter().sum();
                let target = tau * total * (1.0 - 1e-12);
                let mut cum = 0.0;
                let mut m = 0;
                while m < s.dim() && cum < target {
                    cum += s.eigenvalues[m];
                    m += 1;
                }
                let alpha = s.spins[..m].iter().filter(|&&x| x == Spin::Alpha).count();
                alpha.max(m - alpha)
            }
        }
        FnoPolicy::KeepCount(k) => {
            if k == 0 || k > dim_spatial {
                return Err(Mp2Error::Policy(format!(
                    "keep_count {k} not in [1, {dim_spatial}]"
                )));
            }
            k
        }
    };
    Ok(select_per_spin(s, k))
}

/// Rotates the virtual space of `ham` into the kept natural orbitals and
/// semicanonicalizes the kept block (diagonal virtual Fock).
///
/// Occupied orbitals are untouched. The natural orbitals must describe the
/// same canonical virtual space as `ham` (same dimension and order).
pub fn transform_virtuals(
    ham: &ActiveSpaceHamiltonian,
    s: &FnoSubspace,
) -> Result<ActiveSpaceHamiltonian, Mp2Error> {
    let no = ham.n_occ;
    let nv = ham.n_virt();
    if s.dim() != 2 * nv {
        return Err(Mp2Error::Mismatch(format!(
            "{} natural spin orbitals for {} virtual spin orbitals",
            s.dim(),
            2 * nv
        )));
    }
    let mut uv = s.spatial_transform()?;
    let k = uv.ncols();
    let f = ham.fock();
    let fvv = f.view((no, no), (nv, nv)).into_owned();
    let fk = uv.transpose() * &fvv * &uv;
    let off = (0..k)
        .flat_map(|a| (0..k).map(move |b| (a, b)))
        .filter(|(a, b)| a != b)
        .map(|(a, b)| fk[(a, b)].abs())
        .fold(0.0, f64::max);
    if off > 1e-12 {
        let eig = fk.symmetric_eigen();
        let mut idx: Vec<usize> = (0..k).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
        let w = DMatrix::from_fn(k, k, |r, c| {
            let col = eig.eigenvectors.column(idx[c]);
            let dom = col.iamax();
            let sign = if col[dom] < 0.0 { -1.0 } else { 1.0 };
            sign * col[r]
        });
        uv *= w;
    }
    let mut c = DMatrix::zeros(no + nv, no + k);
    for i in 0..no {
        c[(i, i)] = 1.0;
    }
    for a in 0..nv {
        for b in 0..k {
            c[(no + a, no + b)] = uv[(a, b)];
        }
    }
    let mut out = ham.transform(&c, no);
    for i in 0..no {
        out.origin[i] = ham.origin[i];
    }
    Ok(out)
}

/// `E_MP2(full virtual space) - E_MP2(truncated space)` over the shared
/// occupied spin orbitals `occ`.
pub fn delta_mp2(
    ham_full: &ActiveSpaceHamiltonian,
    ham_truncated: &ActiveSpaceHamiltonian,
    occ: &[usize],
) -> Result<f64, Mp2Error> {
    let full = mp2_energy(ham_full, occ, &ham_full.virtual_spin_orbitals())?;
    let trunc = mp2_energy(ham_truncated, occ, &ham_truncated.virtual_spin_orbitals())?;
    Ok(full.e2 - trunc.e2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(d: DMatrix<f64>, virt: Vec<usize>) -> VvDensityBlock {
        VvDensityBlock { d, virt, occupied_context: vec![] }
    }

    #[test]
    fn diagonal_density_sorts_to_permutation() {
        // three alpha virtuals
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.1, 0.3, 0.2]));
        let s = fno_decompose(&block(d, vec![0, 2, 4]));
        assert_eq!(s.eigenvalues, vec![0.3, 0.2, 0.1]);
        let expected = DMatrix::from_row_slice(3, 3, &[0., 0., 1., 1., 0., 0., 0., 1., 0.]);
        assert_eq!(s.u, expected);
        assert_eq!(s.kept, 3);
        assert_eq!(s.occupancy_fraction, 1.0);
    }

    #[test]
    fn symmetric_pair() {
        let (a, b) = (0.4, 0.1);
        let d = DMatrix::from_row_slice(2, 2, &[a, b, b, a]);
        let s = fno_decompose(&block(d, vec![0, 2]));
        assert!((s.eigenvalues[0] - (a + b)).abs() < 1e-14);
        assert!((s.eigenvalues[1] - (a - b)).abs() < 1e-14);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.u[(0, 0)] - r).abs() < 1e-12 && (s.u[(1, 0)] - r).abs() < 1e-12);
        assert!((s.u[(0, 1)].abs() - r).abs() < 1e-12);
        assert!((s.u[(0, 1)] + s.u[(1, 1)]).abs() < 1e-12);
    }

    #[test]
    fn negative_roundoff_is_clamped() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.2, -5e-11]));
        let s = fno_decompose(&block(d, vec![0, 2]));
        assert_eq!(s.eigenvalues, vec![0.2, 0.0]);
    }

    fn paired(occupations: &[f64]) -> FnoSubspace {
        // alpha/beta pairs per spatial orbital, interleaved labels
        let n = 2 * occupations.len();
        let diag: Vec<f64> = occupations.iter().flat_map(|&x| [x, x]).collect();
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag));
        fno_decompose(&block(d, (0..n).collect()))
    }

    #[test]
    fn occupancy_boundary_is_inclusive() {
        let s = paired(&[0.6, 0.3, 0.1]);
        let t = fno_truncate(&s, FnoPolicy::Occupancy(0.9)).unwrap();
        assert_eq!(t.kept, 4);
        assert_eq!(t.kept_spatial(), 2);
        assert_eq!(&t.eigenvalues[..4], &[0.6, 0.6, 0.3, 0.3]);
        assert!((t.occupancy_fraction - 0.9).abs() < 1e-12);
        let full = fno_truncate(&s, FnoPolicy::Occupancy(1.0)).unwrap();
        assert_eq!(full.kept, 6);
        assert_eq!(full.occupancy_fraction, 1.0);
    }

    #[test]
    fn spin_pairs_round_up() {
        let s = paired(&[0.5, 0.3, 0.2]);
        // 0.55 is reached by alpha of the first pair plus one more orbital.
        let t = fno_truncate(&s, FnoPolicy::Occupancy(0.55)).unwrap();
        assert_eq!(t.kept_spatial(), 2);
        assert_eq!(t.kept, 4);
    }

    #[test]
    fn keep_count_and_policy_errors() {
        let s = paired(&[0.5, 0.3, 0.2]);
        assert_eq!(fno_truncate(&s, FnoPolicy::KeepCount(1)).unwrap().kept, 2);
        assert!(fno_truncate(&s, FnoPolicy::KeepCount(0)).is_err());
        assert!(fno_truncate(&s, FnoPolicy::KeepCount(4)).is_err());
        assert!(fno_truncate(&s, FnoPolicy::Occupancy(0.0)).is_err());
        assert!(fno_truncate(&s, FnoPolicy::Occupancy(1.5)).is_err());
    }
}
