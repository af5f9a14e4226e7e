//! Multi-indices, the graded monomial order, and cached per-dimension
//! enumeration tables.
//!
//! Within a fixed degree the order is: `α > β` iff at the first position
//! where they differ `α` has the *smaller* exponent. Consequently
//! `(d, 0, …, 0)` (the power of the first variable) is the minimum of its
//! stratum and `(0, …, 0, d)` the maximum. Ascending order therefore
//! coincides with descending lexicographic order on the exponent vector,
//! which is how strata are enumerated and ranked here.

use crate::error::{Error, Result};
use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Exponent vector `α ∈ ℕ^k` of a monomial `z^α`, with `|α|` cached.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct MultiIndex {
    exps: Vec<u32>,
    degree: u32,
}

impl MultiIndex {
    pub fn new(exps: Vec<u32>) -> Self {
        let degree = exps.iter().sum();
        MultiIndex { exps, degree }
    }

    /// `e_i`, the exponent of the single variable `i` (0-based).
    pub fn unit(k: usize, i: usize) -> Self {
        let mut exps = vec![0; k];
        exps[i] = 1;
        MultiIndex::new(exps)
    }

    pub fn exps(&self) -> &[u32] {
        &self.exps
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.exps.len()
    }

    /// Component-wise sum `α + β`.
    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.dim(), other.dim());
        let exps = self
            .exps
            .iter()
            .zip(&other.exps)
            .map(|(a, b)| a + b)
            .collect();
        MultiIndex {
            exps,
            degree: self.degree + other.degree,
        }
    }

    /// True when every exponent at positions `j..k` (0-based) vanishes, i.e.
    /// the monomial only involves variables strictly before `j`.
    pub fn supported_below(&self, j: usize) -> bool {
        self.exps[j..].iter().all(|&e| e == 0)
    }
}

/// Compare two multi-indices of equal dimension and equal degree in the
/// monomial order. Comparing across degrees or dimensions is a domain error.
pub fn order_compare(a: &MultiIndex, b: &MultiIndex) -> Result<Ordering> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
            context: "order_compare".into(),
        });
    }
    if a.degree() != b.degree() {
        return Err(Error::IncomparableDegrees {
            left: a.degree(),
            right: b.degree(),
        });
    }
    Ok(cmp_same_degree(a.exps(), b.exps()))
}

/// Total order on one stratum: ascending = descending lexicographic.
pub(crate) fn cmp_same_degree(a: &[u32], b: &[u32]) -> Ordering {
    // Smaller leading exponents ⇒ greater in the order.
    b.cmp(a)
}

/// Binomial table, sized for every degree/dimension used at desk scale.
fn binomial(n: usize, k: usize) -> u64 {
    static TABLE: OnceLock<Vec<Vec<u64>>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        const N: usize = 160;
        let mut t = vec![vec![0u64; 8]; N];
        for n in 0..N {
            t[n][0] = 1;
            for k in 1..8 {
                if k > n {
                    t[n][k] = 0;
                } else {
                    t[n][k] = t[n - 1][k - 1].saturating_add(t[n - 1][k]);
                }
            }
        }
        t
    });
    if k >= 8 || n >= table.len() {
        panic!("binomial table exhausted: C({n}, {k})");
    }
    table[n][k]
}

/// Number of multi-indices of degree `m` in `nvars` variables.
pub fn stratum_len(nvars: usize, m: u32) -> usize {
    if nvars == 0 {
        return if m == 0 { 1 } else { 0 };
    }
    binomial(m as usize + nvars - 1, nvars - 1) as usize
}

/// Rank of `exps` (degree `m`, `nvars` variables) within its stratum in
/// ascending monomial order, computed combinatorially.
pub(crate) fn stratum_rank(exps: &[u32], m: u32) -> usize {
    let nvars = exps.len();
    let mut rank = 0u64;
    let mut rem = m;
    for (i, &e) in exps.iter().enumerate().take(nvars.saturating_sub(1)) {
        // Entries with a larger exponent at position i come earlier.
        if rem > e {
            let g = (rem - e - 1) as usize; // cumulative count of smaller tails
            let slots = nvars - 1 - i;
            rank += binomial(g + slots, slots);
        }
        rem -= e;
    }
    rank as usize
}

/// Per-entry evaluation/composition helper: `α = pred + e_var` where `pred`
/// is `α` with its last nonzero exponent decremented.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Predecessor {
    /// Global rank of the predecessor, `usize::MAX` when `|α| = 1`.
    pub pred: usize,
    /// Variable index incremented to reach `α`.
    pub var: usize,
}

/// Enumeration tables for all strata `1 ≤ |α| ≤ max_degree` in `nvars`
/// variables, shared through a process-wide cache.
pub(crate) struct IndexTable {
    pub nvars: usize,
    pub max_degree: u32,
    /// `strata[m-1]` lists degree-`m` indices in ascending monomial order.
    strata: Vec<Vec<MultiIndex>>,
    /// Global rank offsets: `offsets[m-1]` = rank of first degree-`m` entry.
    offsets: Vec<usize>,
    preds: Vec<Predecessor>,
}

impl IndexTable {
    fn build(nvars: usize, max_degree: u32) -> Self {
        let mut strata = Vec::with_capacity(max_degree as usize);
        let mut offsets = Vec::with_capacity(max_degree as usize);
        let mut preds = Vec::new();
        let mut offset = 0usize;
        for m in 1..=max_degree {
            offsets.push(offset);
            let mut entries = Vec::with_capacity(stratum_len(nvars, m));
            enumerate_into(nvars, m, &mut entries);
            for mi in &entries {
                let var = mi
                    .exps()
                    .iter()
                    .rposition(|&e| e > 0)
                    .expect("degree ≥ 1 entry has a nonzero exponent");
                let pred = if m == 1 {
                    usize::MAX
                } else {
                    let mut p = mi.exps().to_vec();
                    p[var] -= 1;
                    offsets[m as usize - 2] + stratum_rank(&p, m - 1)
                };
                preds.push(Predecessor { pred, var });
            }
            offset += entries.len();
            strata.push(entries);
        }
        IndexTable {
            nvars,
            max_degree,
            strata,
            offsets,
            preds,
        }
    }

    pub fn stratum(&self, m: u32) -> &[MultiIndex] {
        &self.strata[m as usize - 1]
    }

    pub fn offset(&self, m: u32) -> usize {
        self.offsets[m as usize - 1]
    }

    /// Count of all entries of degree `≤ m` (cache capacity may exceed the
    /// degree a caller asked for, so totals are always taken through here).
    pub fn len_through(&self, m: u32) -> usize {
        self.offset(m) + self.stratum(m).len()
    }

    pub fn preds(&self) -> &[Predecessor] {
        &self.preds
    }

    /// Global rank (over all degrees `1..=max_degree`) of `mi`.
    #[cfg_attr(not(test), allow(dead_code))]
    pub fn global_rank(&self, mi: &MultiIndex) -> usize {
        self.offset(mi.degree()) + stratum_rank(mi.exps(), mi.degree())
    }

    pub fn entry(&self, global_rank: usize) -> &MultiIndex {
        let m = match self.offsets.binary_search(&global_rank) {
            Ok(i) => i + 1,
            Err(i) => i,
        };
        &self.strata[m - 1][global_rank - self.offsets[m - 1]]
    }
}

fn enumerate_into(nvars: usize, m: u32, out: &mut Vec<MultiIndex>) {
    let mut current = vec![0u32; nvars];
    fn rec(pos: usize, rem: u32, current: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
        if pos + 1 == current.len() {
            current[pos] = rem;
            out.push(MultiIndex::new(current.clone()));
            return;
        }
        for e in (0..=rem).rev() {
            current[pos] = e;
            rec(pos + 1, rem - e, current, out);
        }
        current[pos] = 0;
    }
    if nvars == 0 {
        return;
    }
    rec(0, m, &mut current, out);
}

/// Fetch (building or growing on demand) the shared table for `nvars`
/// variables covering degrees up to `max_degree`.
pub(crate) fn table(nvars: usize, max_degree: u32) -> Arc<IndexTable> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<IndexTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("index table cache poisoned");
    match guard.get(&nvars) {
        Some(t) if t.max_degree >= max_degree => Arc::clone(t),
        _ => {
            let t = Arc::new(IndexTable::build(nvars, max_degree));
            guard.insert(nvars, Arc::clone(&t));
            t
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi(exps: &[u32]) -> MultiIndex {
        MultiIndex::new(exps.to_vec())
    }

    #[test]
    fn order_examples() {
        // Spec'd comparisons for k = 2, degree 2.
        assert_eq!(
            order_compare(&mi(&[0, 2]), &mi(&[1, 1])).unwrap(),
            Ordering::Greater
        );
        assert_eq!(
            order_compare(&mi(&[1, 1]), &mi(&[2, 0])).unwrap(),
            Ordering::Greater
        );
        assert_eq!(
            order_compare(&mi(&[1, 1]), &mi(&[1, 1])).unwrap(),
            Ordering::Equal
        );
    }

    #[test]
    fn cross_degree_is_error() {
        assert!(matches!(
            order_compare(&mi(&[1, 0]), &mi(&[1, 1])),
            Err(Error::IncomparableDegrees { .. })
        ));
    }

    #[test]
    fn extremes_of_stratum() {
        // (d,0,…,0) minimal, (0,…,0,d) maximal, for every enumerated stratum.
        for k in 1..=4usize {
            for d in 1..=5u32 {
                let t = table(k, d);
                let s = t.stratum(d);
                let mut lo = vec![0u32; k];
                lo[0] = d;
                let mut hi = vec![0u32; k];
                hi[k - 1] = d;
                assert_eq!(s.first().unwrap().exps(), &lo[..]);
                assert_eq!(s.last().unwrap().exps(), &hi[..]);
                // Enumeration is strictly ascending in the order.
                for w in s.windows(2) {
                    assert_eq!(
                        order_compare(&w[0], &w[1]).unwrap(),
                        Ordering::Less,
                        "stratum k={k} d={d} not ascending"
                    );
                }
            }
        }
    }

    #[test]
    fn ranks_match_enumeration() {
        for k in 1..=4usize {
            for d in 1..=6u32 {
                let t = table(k, d);
                for m in 1..=d {
                    for (r, e) in t.stratum(m).iter().enumerate() {
                        assert_eq!(stratum_rank(e.exps(), m), r);
                        assert_eq!(t.global_rank(e), t.offset(m) + r);
                        assert_eq!(t.entry(t.offset(m) + r), e);
                    }
                }
            }
        }
    }

    #[test]
    fn stratum_sizes() {
        assert_eq!(stratum_len(2, 3), 4);
        assert_eq!(stratum_len(3, 2), 6);
        assert_eq!(stratum_len(4, 4), 35);
        assert_eq!(table(3, 4).len_through(4), 3 + 6 + 10 + 15);
    }

    #[test]
    fn predecessors_are_consistent() {
        let t = table(3, 5);
        for m in 2..=5u32 {
            for (r, e) in t.stratum(m).iter().enumerate() {
                let p = t.preds()[t.offset(m) + r];
                let parent = t.entry(p.pred);
                let rebuilt = parent.add(&MultiIndex::unit(3, p.var));
                assert_eq!(&rebuilt, e);
            }
        }
    }

    #[test]
    fn support_predicate() {
        assert!(mi(&[2, 0, 0]).supported_below(1));
        assert!(!mi(&[2, 1, 0]).supported_below(1));
        assert!(mi(&[1, 2, 0]).supported_below(2));
        assert!(mi(&[0, 0, 0]).supported_below(0));
    }
}
