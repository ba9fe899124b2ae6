#![allow(dead_code)]

use std::fs;
use std::path::PathBuf;

use mifno::{parse_fcidump, IntegralStore};
use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::Value;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture_path(name: &str) -> PathBuf {
    fixtures_dir().join(format!("{name}.fcidump"))
}

pub fn load(name: &str) -> IntegralStore {
    let text = fs::read_to_string(fixture_path(name)).expect("fixture readable");
    parse_fcidump(&text).expect("fixture parses")
}

/// Reference values recorded by the fixture generator.
pub struct Reference {
    pub e_hf: f64,
    pub e_mp2_corr: f64,
    pub e_fci: f64,
    pub e_ccsd: f64,
}

pub fn reference(name: &str) -> Reference {
    let text = fs::read_to_string(fixtures_dir().join("manifest.json")).unwrap();
    let m: Value = serde_json::from_str(&text).unwrap();
    let f = &m["fixtures"][name];
    let get = |k: &str| f[k].as_f64().unwrap_or_else(|| panic!("{name}: missing {k}"));
    Reference { e_hf: get("e_hf"), e_mp2_corr: get("e_mp2_corr"), e_fci: get("e_fci"), e_ccsd: get("e_ccsd") }
}

pub const SMALL_FIXTURES: [&str; 5] =
    ["h2_sto3g", "h4_chain_sto3g", "lih_sto3g", "h2o_sto3g", "beh2_sto3g"];

/// Closed-shell synthetic system whose orbitals are canonical Hartree-Fock
/// orbitals by construction: two-electron integrals come from a random
/// low-rank factorization `(pq|rs) = sum_k L^k_pq L^k_rs`, and `h1` is
/// chosen so the Fock matrix of the lowest `n_electrons / 2` orbitals is
/// `diag(orbital_energies)`.
pub fn synthetic_store(n_orb: usize, n_electrons: usize, seed: u64) -> IntegralStore {
    let mut rng = StdRng::seed_from_u64(seed);
    let n_occ = n_electrons / 2;
    let rank = n_orb + 2;
    let factors: Vec<DMatrix<f64>> = (0..rank)
        .map(|_| {
            let mut l = DMatrix::from_fn(n_orb, n_orb, |_, _| rng.gen_range(-0.3..0.3));
            l = (&l + l.transpose()) * 0.5;
            l
        })
        .collect();
    let mut store = IntegralStore::new(n_orb, n_electrons).unwrap();
    for p in 0..n_orb {
        for q in 0..n_orb {
            for r in 0..n_orb {
                for s in 0..n_orb {
                    let v: f64 = factors.iter().map(|l| l[(p, q)] * l[(r, s)]).sum();
                    store.set_eri(p, q, r, s, v);
                }
            }
        }
    }
    let mut eps: Vec<f64> = (0..n_orb).map(|p| -1.0 + 0.45 * p as f64 + rng.gen_range(0.0..0.1)).collect();
    // Keep a clear HOMO-LUMO gap.
    for e in eps.iter_mut().skip(n_occ) {
        *e += 0.5;
    }
    for p in 0..n_orb {
        for q in 0..=p {
            let g: f64 = (0..n_occ)
                .map(|i| 2.0 * store.eri(p, q, i, i) - store.eri(p, i, i, q))
                .sum();
            let diag = if p == q { eps[p] } else { 0.0 };
            store.set_h1(p, q, diag - g);
        }
    }
    store.set_core_energy(rng.gen_range(0.5..2.0));
    store
}

/// `k` copies of a closed-shell system with no integrals between them.
/// Orbitals are ordered occupied-first (copy-major within each block) so
/// the reference is the lowest occupation.
pub fn copies(unit: &IntegralStore, k: usize) -> IntegralStore {
    let n = unit.n_orb();
    let no = unit.n_occupied();
    let place = |copy: usize, p: usize| {
        if p < no {
            copy * no + p
        } else {
            k * no + copy * (n - no) + (p - no)
        }
    };
    let mut out = IntegralStore::new(k * n, k * unit.n_electrons()).unwrap();
    for copy in 0..k {
        for p in 0..n {
            for q in 0..n {
                out.set_h1(place(copy, p), place(copy, q), unit.h1(p, q));
                for r in 0..n {
                    for s in 0..n {
                        let v = unit.eri(p, q, r, s);
                        out.set_eri(place(copy, p), place(copy, q), place(copy, r), place(copy, s), v);
                    }
                }
            }
        }
    }
    out.set_core_energy(k as f64 * unit.core_energy());
    out
}

/// Writes a store as an FCIDUMP file in `dir`.
pub fn write_store(dir: &std::path::Path, name: &str, store: &IntegralStore) -> PathBuf {
    let path = dir.join(format!("{name}.fcidump"));
    fs::write(&path, store.to_fcidump()).unwrap();
    path
}

/// Lowest eigenvalue of a dense symmetric matrix.
pub fn lowest_eigenvalue(m: DMatrix<f64>) -> f64 {
    m.symmetric_eigen().eigenvalues.min()
}
