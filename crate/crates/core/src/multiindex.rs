//! Multi-indices, the enumeration orders used by the polynomial spaces, and
//! the dimension counts of full and quasi-Trefftz polynomial spaces.
//!
//! The graded order used throughout the crate sorts by `|i|` ascending and
//! breaks ties by the first entry descending, then recursively on the
//! remaining entries. In two variables and degree one this yields
//! `(0,0), (1,0), (0,1)`, i.e. the usual graded lexicographic monomial order
//! with `x1 > x2 > ...`.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock, RwLock};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MultiIndexError {
    #[error("degree p = {p} is smaller than operator order m = {m}")]
    DegreeBelowOrder { p: usize, m: usize },
    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),
    #[error("dimension must be at least 1")]
    ZeroDimension,
}

/// Ordered tuple of `d >= 1` non-negative integers.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: impl Into<Vec<u32>>) -> Self {
        let entries = entries.into();
        assert!(!entries.is_empty(), "multi-index needs at least one entry");
        MultiIndex(entries)
    }

    pub fn zeros(d: usize) -> Self {
        Self::new(vec![0; d])
    }

    /// `k * e_axis`.
    pub fn axis(d: usize, axis: usize, k: u32) -> Self {
        let mut v = vec![0; d];
        v[axis] = k;
        Self::new(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `|i| = i_1 + ... + i_d`.
    pub fn order(&self) -> usize {
        self.0.iter().map(|&v| v as usize).sum()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn get(&self, k: usize) -> u32 {
        self.0[k]
    }

    /// Componentwise partial order `i <= j`.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `self - other` when `other <= self`.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<Vec<_>>>()
            .map(MultiIndex)
    }

    /// Drops the first entry (the `x1` direction of the Cauchy hyperplane).
    pub fn tail(&self) -> &[u32] {
        &self.0[1..]
    }

    /// `i! = i_1! ... i_d!` with overflow detection.
    pub fn factorial(&self) -> Result<u128, MultiIndexError> {
        self.0.iter().try_fold(1u128, |acc, &k| {
            acc.checked_mul(factorial_u128(k as usize)?)
                .ok_or(MultiIndexError::Overflow("multi-index factorial"))
        })
    }

    /// `i!` as a float; exact up to `18!` per component, correctly rounded beyond.
    pub fn factorial_f64(&self) -> f64 {
        self.0.iter().map(|&k| factorial_f64(k as usize)).product()
    }

    /// `C(i, j) = prod_k C(i_k, j_k)`; zero unless `j <= i`.
    pub fn binomial(&self, j: &MultiIndex) -> Result<u128, MultiIndexError> {
        let mut acc = 1u128;
        for (&n, &k) in self.0.iter().zip(&j.0) {
            if k > n {
                return Ok(0);
            }
            acc = acc
                .checked_mul(binomial_u128(n as u64, k as u64)?)
                .ok_or(MultiIndexError::Overflow("multi-index binomial"))?;
        }
        Ok(acc)
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

fn factorial_u128(n: usize) -> Result<u128, MultiIndexError> {
    (1..=n as u128).try_fold(1u128, |acc, k| {
        acc.checked_mul(k)
            .ok_or(MultiIndexError::Overflow("factorial"))
    })
}

pub fn factorial_f64(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Binomial coefficient with a multiplicative formula that stays exact.
pub fn binomial_u128(n: u64, k: u64) -> Result<u128, MultiIndexError> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc = 1u128;
    for t in 0..k {
        // acc * (n - t) is divisible by (t + 1) after multiplication.
        acc = acc
            .checked_mul((n - t) as u128)
            .ok_or(MultiIndexError::Overflow("binomial"))?
            / (t as u128 + 1);
    }
    Ok(acc)
}

/// Appends all multi-indices of length `d` with `|i| = q` in graded tie order.
fn push_degree(d: usize, q: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if d == 1 {
        prefix.push(q);
        out.push(MultiIndex(prefix.clone()));
        prefix.pop();
        return;
    }
    for first in (0..=q).rev() {
        prefix.push(first);
        push_degree(d - 1, q - first, prefix, out);
        prefix.pop();
    }
}

/// All multi-indices with `|i| = q`, in graded tie order.
pub fn enumerate_degree(d: usize, q: usize) -> Vec<MultiIndex> {
    assert!(d >= 1);
    let mut out = Vec::new();
    push_degree(d, q as u32, &mut Vec::with_capacity(d), &mut out);
    out
}

/// All multi-indices with `|i| <= p` in graded order; `C(p+d, d)` entries.
pub fn enumerate_upto(d: usize, p: usize) -> Vec<MultiIndex> {
    assert!(d >= 1, "dimension must be positive");
    let mut out = Vec::with_capacity(dim_full(d, p));
    for q in 0..=p {
        push_degree(d, q as u32, &mut Vec::with_capacity(d), &mut out);
    }
    out
}

/// Lexicographically ascending enumeration of `(d-1)`-tuples with fixed sum.
fn push_lex_ascending(d: usize, sum: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if d == 0 {
        if sum == 0 {
            out.push(prefix.clone());
        }
        return;
    }
    if d == 1 {
        prefix.push(sum);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in 0..=sum {
        prefix.push(first);
        push_lex_ascending(d - 1, sum - first, prefix, out);
        prefix.pop();
    }
}

/// Order in which the recursion computes `a_{i + m e_1}`: outer loop over
/// `q = |i|`, middle loop over `i_1` ascending, inner loop over the remaining
/// entries with sum `q - i_1` in ascending lexicographic order.
pub fn algorithm1_order(d: usize, p: usize, m: usize) -> Result<Vec<MultiIndex>, MultiIndexError> {
    if d == 0 {
        return Err(MultiIndexError::ZeroDimension);
    }
    if p < m {
        return Err(MultiIndexError::DegreeBelowOrder { p, m });
    }
    let mut out = Vec::with_capacity(dim_full(d, p - m));
    for q in 0..=(p - m) as u32 {
        for i1 in 0..=q {
            let mut tails = Vec::new();
            push_lex_ascending(d - 1, q - i1, &mut Vec::new(), &mut tails);
            for tail in tails {
                let mut e = Vec::with_capacity(d);
                e.push(i1);
                e.extend(tail);
                out.push(MultiIndex(e));
            }
        }
    }
    Ok(out)
}

/// `dim P^p(R^d) = C(p+d, d)`.
pub fn dim_full(d: usize, p: usize) -> usize {
    binomial_u128((p + d) as u64, d as u64).expect("dimension overflow") as usize
}

/// `dim QT^p(R^d)` for an order-`m` operator: `C(p+d,d) - C(p+d-m,d)`.
pub fn dim_qt(d: usize, p: usize, m: usize) -> Result<usize, MultiIndexError> {
    if d == 0 {
        return Err(MultiIndexError::ZeroDimension);
    }
    if p < m || m == 0 {
        return Err(MultiIndexError::DegreeBelowOrder { p, m });
    }
    Ok(dim_full(d, p) - dim_full(d, p - m))
}

/// Dense position lookup for the graded enumeration of `|i| <= p`.
#[derive(Debug, Clone)]
pub struct GradedIndex {
    d: usize,
    p: usize,
    list: Vec<MultiIndex>,
    position: Vec<usize>,
}

impl GradedIndex {
    pub fn new(d: usize, p: usize) -> Self {
        let list = enumerate_upto(d, p);
        let radix = p + 1;
        let mut position = vec![usize::MAX; radix.pow(d as u32)];
        for (pos, mi) in list.iter().enumerate() {
            position[Self::code_for(radix, mi.entries())] = pos;
        }
        GradedIndex { d, p, list, position }
    }

    fn code_for(radix: usize, entries: &[u32]) -> usize {
        entries.iter().rev().fold(0, |acc, &e| acc * radix + e as usize)
    }

    /// Process-wide cached instance for `(d, p)`.
    pub fn shared(d: usize, p: usize) -> Arc<GradedIndex> {
        static CACHE: OnceLock<RwLock<HashMap<(usize, usize), Arc<GradedIndex>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(g) = cache.read().unwrap().get(&(d, p)) {
            return g.clone();
        }
        let g = Arc::new(GradedIndex::new(d, p));
        cache.write().unwrap().entry((d, p)).or_insert(g).clone()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn degree(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.list.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.list
    }

    pub fn at(&self, pos: usize) -> &MultiIndex {
        &self.list[pos]
    }

    /// Position of `entries` in the graded list, or `None` if `|i| > p`.
    pub fn position_of(&self, entries: &[u32]) -> Option<usize> {
        debug_assert_eq!(entries.len(), self.d);
        if entries.iter().map(|&e| e as usize).sum::<usize>() > self.p {
            return None;
        }
        Some(self.position[Self::code_for(self.p + 1, entries)])
    }

    pub fn position(&self, mi: &MultiIndex) -> Option<usize> {
        self.position_of(mi.entries())
    }

    /// Number of entries with `|i| <= q` (prefix length of the graded list).
    pub fn count_upto(&self, q: usize) -> usize {
        dim_full(self.d, q.min(self.p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    #[test]
    fn enumerate_small_cases() {
        assert_eq!(enumerate_upto(1, 2), vec![mi(&[0]), mi(&[1]), mi(&[2])]);
        assert_eq!(enumerate_upto(2, 1), vec![mi(&[0, 0]), mi(&[1, 0]), mi(&[0, 1])]);
        assert_eq!(enumerate_upto(3, 4).len(), 35);
    }

    #[test]
    fn algorithm1_small_cases() {
        assert_eq!(
            algorithm1_order(2, 3, 2).unwrap(),
            vec![mi(&[0, 0]), mi(&[0, 1]), mi(&[1, 0])]
        );
        assert_eq!(algorithm1_order(1, 4, 2).unwrap(), vec![mi(&[0]), mi(&[1]), mi(&[2])]);
        assert_eq!(
            algorithm1_order(2, 1, 2),
            Err(MultiIndexError::DegreeBelowOrder { p: 1, m: 2 })
        );
    }

    #[test]
    fn algorithm1_sweeps_diagonals_in_2d() {
        // For d = 2 the computed coefficient a_{i + 2e1} walks each
        // anti-diagonal |i| = q from the k1 = 2 column outwards.
        let order = algorithm1_order(2, 6, 2).unwrap();
        assert_eq!(order.len(), 15);
        let mut expected = Vec::new();
        for q in 0..=4u32 {
            for i1 in 0..=q {
                expected.push(mi(&[i1, q - i1]));
            }
        }
        assert_eq!(order, expected);
    }

    #[test]
    fn factorial_and_binomial() {
        assert_eq!(mi(&[2, 1]).factorial().unwrap(), 2);
        assert_eq!(mi(&[2, 1]).binomial(&mi(&[1, 1])).unwrap(), 2);
        assert_eq!(mi(&[3, 2]).binomial(&mi(&[1, 0])).unwrap(), 3);
        assert_eq!(mi(&[1, 2]).binomial(&mi(&[2, 0])).unwrap(), 0);
        let f20: u128 = (1..=20u128).product();
        assert_eq!(mi(&[20, 2]).factorial().unwrap(), 2 * f20);
        // (20!)^3 exceeds 128 bits and must be reported, not wrapped.
        assert!(mi(&[20, 20, 20]).factorial().is_err());
        assert!(mi(&[35]).factorial().is_err());
    }

    #[test]
    fn dimension_table_entries() {
        assert_eq!(dim_qt(2, 6, 2).unwrap(), 13);
        assert_eq!(dim_full(2, 6), 28);
        assert_eq!(dim_qt(3, 10, 2).unwrap(), 121);
        assert_eq!(dim_full(3, 10), 286);
        for p in 2..30 {
            assert_eq!(dim_qt(1, p, 2).unwrap(), 2);
        }
        assert!(dim_qt(2, 1, 2).is_err());
    }

    #[test]
    fn closed_forms_for_second_order() {
        for p in 2..=20 {
            assert_eq!(dim_qt(2, p, 2).unwrap(), 2 * p + 1);
            assert_eq!(dim_qt(3, p, 2).unwrap(), (p + 1) * (p + 1));
        }
    }

    #[test]
    fn dim_qt_matches_cauchy_sum_and_count() {
        for d in 1..=4 {
            for m in 1..=3 {
                for p in m..=12 {
                    let by_count = dim_full(d, p) - enumerate_upto(d, p - m).len();
                    let by_sum: usize = (0..m)
                        .map(|r| binomial_u128((p - r + d - 1) as u64, (d - 1) as u64).unwrap() as usize)
                        .sum();
                    assert_eq!(dim_qt(d, p, m).unwrap(), by_count);
                    assert_eq!(by_sum, by_count);
                }
            }
        }
    }

    #[test]
    fn graded_index_positions() {
        let g = GradedIndex::new(3, 5);
        for (k, m) in g.indices().iter().enumerate() {
            assert_eq!(g.position(m), Some(k));
        }
        assert_eq!(g.position_of(&[3, 3, 0]), None);
        assert_eq!(g.count_upto(2), 10);
    }

    proptest! {
        #[test]
        fn enumeration_is_complete_and_distinct(d in 1usize..=4, p in 0usize..=12) {
            let list = enumerate_upto(d, p);
            prop_assert_eq!(list.len(), dim_full(d, p));
            let set: std::collections::HashSet<_> = list.iter().cloned().collect();
            prop_assert_eq!(set.len(), list.len());
            prop_assert!(list.windows(2).all(|w| w[0].order() <= w[1].order()));
            prop_assert!(list.iter().all(|m| m.order() <= p));
        }

        #[test]
        fn algorithm1_is_graded_permutation(d in 1usize..=4, m in 1usize..=3, extra in 0usize..=8) {
            let p = m + extra;
            let order = algorithm1_order(d, p, m).unwrap();
            prop_assert!(order.windows(2).all(|w| w[0].order() <= w[1].order()));
            let mut a = order.clone();
            let mut b = enumerate_upto(d, p - m);
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }
    }
}
