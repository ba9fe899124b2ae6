//! Increment bookkeeping for the many-body expansion over occupied orbitals.
//!
//! The correlation energy of every subset `S` of occupied spatial orbitals is
//! decomposed as `E_c(S) = sum_{T subset of S, T nonempty} eps_T`, so
//! `eps_S = E_c(S) - sum_{T proper subset} eps_T`. Truncating the sum over
//! `T` at subsets of size `n` gives the order-`n` expansion.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Two correlation energies for the same increment further apart than this
/// are a consistency error.
pub const CONSISTENCY_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum IncrementError {
    #[error("expansion order {n} is not in [1, {n_occ}]")]
    Order { n: usize, n_occ: usize },
    #[error("invalid increment {indices:?}: {msg}")]
    Invalid { indices: Vec<usize>, msg: String },
    #[error("increment {increment} needs eps of {missing}")]
    Dependency { increment: Increment, missing: Increment },
    #[error("increment {0} has no correlation energy")]
    MissingEnergy(Increment),
    #[error("expansion incomplete, unsolved increments: {}", list(.0))]
    Incomplete(Vec<Increment>),
    #[error("conflicting energies for {increment}: {old} vs {new}")]
    Consistency { increment: Increment, old: f64, new: f64 },
}

fn list(v: &[Increment]) -> String {
    let shown: Vec<String> = v.iter().take(10).map(|s| s.to_string()).collect();
    if v.len() > 10 {
        format!("{} ... ({} total)", shown.join(" "), v.len())
    } else {
        shown.join(" ")
    }
}

/// Strictly ascending set of occupied spatial-orbital indices (0-based).
///
/// Ordered by size first, then lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Increment(Vec<usize>);

impl Increment {
    pub fn new(indices: Vec<usize>) -> Result<Self, IncrementError> {
        if indices.is_empty() {
            return Err(IncrementError::Invalid { indices, msg: "empty".into() });
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(IncrementError::Invalid { indices, msg: "not strictly ascending".into() });
        }
        Ok(Self(indices))
    }

    /// Validates against the number of occupied orbitals as well.
    pub fn within(indices: Vec<usize>, n_occ: usize) -> Result<Self, IncrementError> {
        if let Some(&i) = indices.iter().find(|&&i| i >= n_occ) {
            return Err(IncrementError::Invalid {
                indices,
                msg: format!("index {i} not below {n_occ}"),
            });
        }
        Self::new(indices)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    /// Nonempty proper subsets, by size then lexicographically.
    pub fn proper_subsets(&self) -> Vec<Increment> {
        let m = self.order();
        let mut out = Vec::new();
        for k in 1..m {
            for pos in combinations(m, k) {
                out.push(Increment(pos.iter().map(|&p| self.0[p]).collect()));
            }
        }
        out
    }

    /// Subsets with exactly one index removed.
    pub fn faces(&self) -> Vec<Increment> {
        if self.order() < 2 {
            return Vec::new();
        }
        (0..self.order())
            .map(|skip| {
                Increment(self.0.iter().enumerate().filter(|(k, _)| *k != skip).map(|(_, &i)| i).collect())
            })
            .collect()
    }

    /// Human-readable label with 1-based indices, e.g. `two-body (2,3)`.
    pub fn label(&self) -> String {
        let body = match self.order() {
            1 => "one-body".to_string(),
            2 => "two-body".to_string(),
            3 => "three-body".to_string(),
            4 => "four-body".to_string(),
            m => format!("{m}-body"),
        };
        format!("{body} {self}")
    }
}

impl TryFrom<Vec<usize>> for Increment {
    type Error = IncrementError;
    fn try_from(v: Vec<usize>) -> Result<Self, Self::Error> {
        Increment::new(v)
    }
}

impl From<Increment> for Vec<usize> {
    fn from(s: Increment) -> Self {
        s.0
    }
}

impl Ord for Increment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Increment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Increment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
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

/// Binomial coefficient; `None` on overflow.
pub fn binomial(n: usize, k: usize) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// `sum_{m=1..n} C(n_occ, m)` without enumerating.
pub fn count_increments(n_occ: usize, n: usize) -> Result<u64, IncrementError> {
    if n == 0 || n > n_occ {
        return Err(IncrementError::Order { n, n_occ });
    }
    Ok((1..=n).map(|m| binomial(n_occ, m).unwrap_or(u64::MAX)).fold(0u64, u64::saturating_add))
}

/// All subsets of sizes `1..=n`, by size then lexicographically.
pub fn enumerate_increments(n_occ: usize, n: usize) -> Result<Vec<Increment>, IncrementError> {
    if n == 0 || n > n_occ {
        return Err(IncrementError::Order { n, n_occ });
    }
    Ok((1..=n).flat_map(|m| increments_of_order(n_occ, m)).collect())
}

/// All subsets of size exactly `m`.
pub fn increments_of_order(n_occ: usize, m: usize) -> Vec<Increment> {
    combinations(n_occ, m).into_iter().map(Increment).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pending,
    Solved,
    Failed,
    /// Pruned by energy screening; contributes `eps = 0`.
    Screened,
}

/// Correlation energies, increment energies, and solve status per increment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IncrementLedger {
    pub n_occ: usize,
    pub ec: BTreeMap<Increment, f64>,
    pub eps: BTreeMap<Increment, f64>,
    pub status: BTreeMap<Increment, Status>,
}

impl IncrementLedger {
    pub fn new(n_occ: usize) -> Self {
        Self { n_occ, ..Default::default() }
    }

    /// All increments up to order `n`, pending.
    pub fn skeleton(n_occ: usize, n: usize) -> Result<Self, IncrementError> {
        let mut ledger = Self::new(n_occ);
        for s in enumerate_increments(n_occ, n)? {
            ledger.status.insert(s, Status::Pending);
        }
        Ok(ledger)
    }

    /// Records `E_c(S)`. Re-inserting an equal value (within
    /// [`CONSISTENCY_TOL`]) keeps the newer one; a conflicting value is an
    /// error and leaves the ledger unchanged.
    pub fn insert_ec(&mut self, s: Increment, value: f64) -> Result<(), IncrementError> {
        if let Some(&old) = self.ec.get(&s) {
            if (old - value).abs() > CONSISTENCY_TOL {
                return Err(IncrementError::Consistency { increment: s, old, new: value });
            }
        }
        self.ec.insert(s.clone(), value);
        self.status.insert(s, Status::Solved);
        Ok(())
    }

    pub fn mark_failed(&mut self, s: Increment) {
        self.status.insert(s, Status::Failed);
    }

    pub fn mark_screened(&mut self, s: Increment) {
        self.eps.insert(s.clone(), 0.0);
        self.status.insert(s, Status::Screened);
    }

    pub fn status_of(&self, s: &Increment) -> Status {
        self.status.get(s).copied().unwrap_or(Status::Pending)
    }

    /// `eps_S = E_c(S) - sum_{T proper subset} eps_T`; stores and returns it.
    pub fn increment_epsilon(&mut self, s: &Increment) -> Result<f64, IncrementError> {
        if self.status_of(s) == Status::Screened {
            self.eps.insert(s.clone(), 0.0);
            return Ok(0.0);
        }
        let ec = *self.ec.get(s).ok_or_else(|| IncrementError::MissingEnergy(s.clone()))?;
        let mut lower = 0.0;
        for t in s.proper_subsets() {
            match self.eps.get(&t) {
                Some(e) => lower += e,
                None => {
                    return Err(IncrementError::Dependency { increment: s.clone(), missing: t })
                }
            }
        }
        let eps = ec - lower;
        self.eps.insert(s.clone(), eps);
        Ok(eps)
    }

    /// Recomputes `eps` for every solved or screened increment of order
    /// `m`, in ascending subset order.
    pub fn compute_order(&mut self, m: usize) -> Result<(), IncrementError> {
        let targets: Vec<Increment> = self
            .status
            .iter()
            .filter(|(s, st)| s.order() == m && matches!(st, Status::Solved | Status::Screened))
            .map(|(s, _)| s.clone())
            .collect();
        for s in &targets {
            self.increment_epsilon(s)?;
        }
        Ok(())
    }

    /// Order-`(m+1)` work list after pruning every superset whose order-`m`
    /// subsets all have `|eps| < threshold`.
    pub fn screen(&self, m: usize, threshold: f64) -> Vec<Increment> {
        increments_of_order(self.n_occ, m + 1)
            .into_iter()
            .filter(|s| {
                !s.faces().iter().all(|t| self.eps.get(t).is_some_and(|e| e.abs() < threshold))
            })
            .collect()
    }

    /// Sums `eps` by order up to `n`.
    pub fn reconstruct(&self, n: usize, e_hf: f64) -> Result<ExpansionResult, IncrementError> {
        if n == 0 || n > self.n_occ {
            return Err(IncrementError::Order { n, n_occ: self.n_occ });
        }
        let all = enumerate_increments(self.n_occ, n)?;
        let missing: Vec<Increment> = all
            .iter()
            .filter(|s| {
                !matches!(self.status_of(s), Status::Solved | Status::Screened)
                    || !self.eps.contains_key(*s)
            })
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(IncrementError::Incomplete(missing));
        }
        let mut per_order_sums = BTreeMap::new();
        for s in &all {
            *per_order_sums.entry(s.order()).or_insert(0.0) += self.eps[s];
        }
        let e_corr: f64 = per_order_sums.values().sum();
        Ok(ExpansionResult { n, e_corr, e_hf, e_total: e_hf + e_corr, per_order_sums })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionResult {
    pub n: usize,
    pub e_corr: f64,
    pub e_hf: f64,
    pub e_total: f64,
    pub per_order_sums: BTreeMap<usize, f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inc(v: &[usize]) -> Increment {
        Increment::new(v.to_vec()).unwrap()
    }

    #[test]
    fn counts() {
        assert_eq!(enumerate_increments(3, 2).unwrap().len(), 6);
        assert_eq!(enumerate_increments(5, 3).unwrap().len(), 25);
        assert_eq!(enumerate_increments(5, 4).unwrap().len(), 30);
        assert_eq!(count_increments(89, 3).unwrap(), 117_569);
        assert_eq!(enumerate_increments(3, 4), Err(IncrementError::Order { n: 4, n_occ: 3 }));
        assert!(enumerate_increments(3, 0).is_err());
    }

    #[test]
    fn enumeration_order() {
        let all = enumerate_increments(3, 2).unwrap();
        let want: Vec<Increment> =
            [&[0][..], &[1], &[2], &[0, 1], &[0, 2], &[1, 2]].iter().map(|v| inc(v)).collect();
        assert_eq!(all, want);
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(sorted, all);
    }

    #[test]
    fn validation_and_labels() {
        assert!(Increment::new(vec![1, 1]).is_err());
        assert!(Increment::new(vec![2, 1]).is_err());
        assert!(Increment::new(vec![]).is_err());
        assert!(Increment::within(vec![0, 3], 3).is_err());
        assert_eq!(inc(&[1, 2]).label(), "two-body (2,3)");
        assert_eq!(inc(&[0]).label(), "one-body (1)");
        let json = serde_json::to_string(&inc(&[0, 2])).unwrap();
        assert_eq!(json, "[0,2]");
        assert!(serde_json::from_str::<Increment>("[2,0]").is_err());
    }

    #[test]
    fn epsilon_arithmetic() {
        let mut l = IncrementLedger::new(2);
        l.insert_ec(inc(&[0]), -0.10).unwrap();
        l.insert_ec(inc(&[1]), -0.15).unwrap();
        l.insert_ec(inc(&[0, 1]), -0.30).unwrap();
        assert_eq!(
            l.increment_epsilon(&inc(&[0, 1])),
            Err(IncrementError::Dependency { increment: inc(&[0, 1]), missing: inc(&[0]) })
        );
        assert_eq!(l.increment_epsilon(&inc(&[0])).unwrap(), -0.10);
        l.increment_epsilon(&inc(&[1])).unwrap();
        let e = l.increment_epsilon(&inc(&[0, 1])).unwrap();
        assert!((e + 0.05).abs() < 1e-15);
        let r = l.reconstruct(2, -1.0).unwrap();
        assert!((r.e_corr + 0.30).abs() < 1e-15);
        assert!((r.e_total + 1.30).abs() < 1e-15);
    }

    #[test]
    fn consistency_and_incomplete() {
        let mut l = IncrementLedger::skeleton(2, 2).unwrap();
        l.insert_ec(inc(&[0]), -0.1).unwrap();
        l.insert_ec(inc(&[0]), -0.1 + 1e-12).unwrap();
        assert!(matches!(l.insert_ec(inc(&[0]), -0.2), Err(IncrementError::Consistency { .. })));
        l.compute_order(1).unwrap();
        match l.reconstruct(2, 0.0) {
            Err(IncrementError::Incomplete(m)) => assert_eq!(m, vec![inc(&[1]), inc(&[0, 1])]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn screening() {
        let mut l = IncrementLedger::new(3);
        for (i, e) in [(0, -1e-3), (1, -1e-8), (2, -2e-8)] {
            l.insert_ec(inc(&[i]), e).unwrap();
        }
        l.compute_order(1).unwrap();
        assert_eq!(l.screen(1, 0.0), increments_of_order(3, 2));
        assert_eq!(l.screen(1, 1e-6), vec![inc(&[0, 1]), inc(&[0, 2])]);
        assert!(l.screen(1, 1.0).is_empty());
    }

    #[test]
    fn skeleton_of_large_expansion() {
        let l = IncrementLedger::skeleton(89, 3).unwrap();
        assert_eq!(l.status.len(), 117_569);
    }

    proptest! {
        #[test]
        fn full_expansion_telescopes(values in proptest::collection::vec(-1.0f64..0.0, 15)) {
            let all = enumerate_increments(4, 4).unwrap();
            let mut l = IncrementLedger::new(4);
            for (s, v) in all.iter().zip(&values) {
                l.insert_ec(s.clone(), *v).unwrap();
            }
            for m in 1..=4 {
                l.compute_order(m).unwrap();
            }
            let r = l.reconstruct(4, 0.0).unwrap();
            let full = l.ec[&inc(&[0, 1, 2, 3])];
            prop_assert!((r.e_corr - full).abs() < 1e-12);
            let by_order: f64 = r.per_order_sums.values().sum();
            prop_assert!((by_order - r.e_corr).abs() < 1e-12);
        }

        #[test]
        fn recomputation_is_bit_identical(values in proptest::collection::vec(-1.0f64..0.0, 6)) {
            let all = enumerate_increments(3, 2).unwrap();
            let mut a = IncrementLedger::new(3);
            for (s, v) in all.iter().zip(&values) {
                a.insert_ec(s.clone(), *v).unwrap();
            }
            let mut b = a.clone();
            for m in 1..=2 {
                a.compute_order(m).unwrap();
                b.compute_order(m).unwrap();
                b.compute_order(m).unwrap();
            }
            for (s, e) in &a.eps {
                prop_assert_eq!(e.to_bits(), b.eps[s].to_bits());
            }
        }
    }
}
