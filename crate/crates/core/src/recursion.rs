//! Memoised exact evaluation of topological recursion.
//!
//! For `2g - 2 + n > 0` outside the base cases,
//!
//! ```text
//! F_{g;d1,..,dn} = Σ_{m≥2} Σ_a B^a_{d1,dm} F_{g; a, d2..^dm..dn}
//!                + ½ Σ_{a,b} C^{a,b}_{d1} ( F_{g-1; a,b,d2..dn}
//!                      + Σ_{g1+g2=g, I1⊔I2={d2..dn}} F_{g1; a,I1} F_{g2; b,I2} )
//! ```
//!
//! with `F_{0;i,j,k} = A_{i,j,k}`, `F_{1;i} = D_i` and `F_{0;d1} = F_{0;d1,d2} = 0`.
//! The split sum runs over ordered bipartitions of the *positions* of
//! `d2..dn`; we enumerate sub-multisets and weight each by the number of
//! position subsets that realise it.
//!
//! Every term on the right has strictly smaller `2g - 2 + n`, so the
//! evaluation is a DAG walk. It is driven by an explicit stack rather than
//! native recursion so that deep genera cannot overflow the call stack.

use std::collections::BTreeMap;
use std::hash::Hash;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use dashmap::DashMap;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use once_cell::sync::Lazy;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::airy::{partitions_with_length, AiryData, Partition, SurfaceClass, WittenKontsevich};
use crate::error::{Error, Result};
use crate::numerics::{format_rational, parse_rational};

/// Genus plus canonical partition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AmplitudeKey {
    pub g: u32,
    pub d: Partition,
}

impl AmplitudeKey {
    pub fn new(g: u32, d: impl Into<Partition>) -> Self {
        AmplitudeKey { g, d: d.into() }
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn euler(&self) -> i64 {
        2 * self.g as i64 - 2 + self.d.len() as i64
    }

    pub fn surface(&self) -> SurfaceClass {
        SurfaceClass::new(self.g, self.d.len() as u32)
    }

    /// `Σ d_i = 3g - 3 + n` on a stable surface.
    pub fn is_in_dimension(&self) -> bool {
        self.surface().dimension() == Some(self.d.weight())
    }
}

/// Concurrent memo table. A cache must only ever be used with one set of
/// initial data.
#[derive(Debug, Default)]
pub struct AmplitudeCache {
    map: DashMap<AmplitudeKey, BigRational>,
    hits: AtomicU64,
    misses: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub entries: usize,
    pub hits: u64,
    pub misses: u64,
}

impl AmplitudeCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            entries: self.map.len(),
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
        }
    }

    pub fn get(&self, key: &AmplitudeKey) -> Option<BigRational> {
        let v = self.map.get(key).map(|r| r.value().clone());
        let counter = if v.is_some() { &self.hits } else { &self.misses };
        counter.fetch_add(1, Ordering::Relaxed);
        v
    }

    fn contains(&self, key: &AmplitudeKey) -> bool {
        self.map.contains_key(key)
    }

    /// Idempotent: a second insert of the same key must carry the same value.
    pub fn insert(&self, key: AmplitudeKey, value: BigRational) {
        match self.map.entry(key) {
            dashmap::mapref::entry::Entry::Occupied(e) => {
                debug_assert_eq!(e.get(), &value, "conflicting values for {:?}", e.key());
            }
            dashmap::mapref::entry::Entry::Vacant(e) => {
                e.insert(value);
            }
        }
    }

    /// Snapshot sorted by key.
    pub fn entries(&self) -> Vec<(AmplitudeKey, BigRational)> {
        let mut v: Vec<_> =
            self.map.iter().map(|r| (r.key().clone(), r.value().clone())).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    /// Writes one `[g, [d1, ..], "p/q"]` array per line.
    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (k, v) in self.entries() {
            serde_json::to_writer(&mut w, &(k.g, &k.d, format_rational(&v)))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_jsonl(&self, path: &Path) -> Result<usize> {
        let r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut count = 0;
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (g, d, v): (u32, Partition, String) = serde_json::from_str(&line)?;
            self.insert(AmplitudeKey { g, d }, parse_rational(&v)?);
            count += 1;
        }
        Ok(count)
    }
}

/// Values that need no recursion: unstable surfaces, base cases and (when
/// the data has a selection rule) off-dimension partitions.
fn direct_value<D: AiryData + ?Sized>(data: &D, g: u32, parts: &[u32]) -> Option<BigRational> {
    let n = parts.len();
    if 2 * g as i64 - 2 + n as i64 <= 0 {
        return Some(BigRational::zero());
    }
    if let Some(w) = data.selection_weight(g, n) {
        if parts.iter().map(|&d| d as u64).sum::<u64>() != w {
            return Some(BigRational::zero());
        }
    }
    match (g, n) {
        (0, 3) => Some(data.a(parts[0], parts[1], parts[2])),
        (1, 1) => Some(data.d(parts[0])),
        _ => None,
    }
}

/// `coefficient · Π F(factor)`, with at most two unresolved factors.
#[derive(Debug, Clone)]
struct Term {
    coefficient: BigRational,
    factors: Vec<AmplitudeKey>,
}

/// Accumulates terms, merging those with identical factor lists and folding
/// directly known factors into the coefficient.
struct TermCollector<'a, D: AiryData + ?Sized> {
    data: &'a D,
    terms: BTreeMap<Vec<AmplitudeKey>, BigRational>,
}

impl<'a, D: AiryData + ?Sized> TermCollector<'a, D> {
    fn new(data: &'a D) -> Self {
        TermCollector { data, terms: BTreeMap::new() }
    }

    fn add(&mut self, mut coefficient: BigRational, factors: &[(u32, Partition)]) {
        let mut pending = Vec::with_capacity(factors.len());
        for (g, d) in factors {
            match direct_value(self.data, *g, d.parts()) {
                Some(v) if v.is_zero() => return,
                Some(v) => coefficient *= v,
                None => pending.push(AmplitudeKey { g: *g, d: d.clone() }),
            }
        }
        pending.sort();
        let slot = self.terms.entry(pending).or_insert_with(BigRational::zero);
        *slot += coefficient;
    }

    fn finish(self) -> Vec<Term> {
        self.terms
            .into_iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|(factors, coefficient)| Term { coefficient, factors })
            .collect()
    }
}

fn binomial(n: usize, k: usize) -> BigInt {
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Every sub-multiset of `rest` with the number of position subsets that
/// produce it, plus the complementary sub-multiset.
fn sub_multisets(rest: &Partition) -> Vec<(Partition, Partition, BigInt)> {
    let mult = rest.multiplicities();
    let mut out = Vec::new();
    let mut choice = vec![0usize; mult.len()];
    loop {
        let mut left = Vec::new();
        let mut right = Vec::new();
        let mut weight = BigInt::one();
        for (&(v, c), &k) in mult.iter().zip(&choice) {
            left.extend(std::iter::repeat_n(v, k));
            right.extend(std::iter::repeat_n(v, c - k));
            weight *= binomial(c, k);
        }
        out.push((Partition::new(left), Partition::new(right), weight));
        // odometer increment
        let mut idx = 0;
        loop {
            if idx == mult.len() {
                return out;
            }
            if choice[idx] < mult[idx].1 {
                choice[idx] += 1;
                break;
            }
            choice[idx] = 0;
            idx += 1;
        }
    }
}

/// One application of the recursion with `first` playing the role of `d1`.
fn expand<D: AiryData + ?Sized>(data: &D, g: u32, first: u32, rest: &Partition) -> Vec<Term> {
    let mut acc = TermCollector::new(data);

    for (value, count) in rest.multiplicities() {
        let reduced = rest.without_part(value).expect("value comes from rest");
        for (a, b) in data.b_row(first, value) {
            acc.add(b * BigInt::from(count), &[(g, reduced.with_part(a))]);
        }
    }

    let c_row = data.c_row(first);
    if !c_row.is_empty() {
        let splits = sub_multisets(rest);
        let two = BigRational::from_integer(2.into());
        for (a, b, c) in c_row {
            let half = c / &two;
            if g >= 1 {
                acc.add(half.clone(), &[(g - 1, rest.with_part(a).with_part(b))]);
            }
            for (left, right, weight) in &splits {
                let left = left.with_part(a);
                let right = right.with_part(b);
                let coefficient = &half * weight;
                for g1 in 0..=g {
                    acc.add(coefficient.clone(), &[(g1, left.clone()), (g - g1, right.clone())]);
                }
            }
        }
    }
    acc.finish()
}

fn evaluate(terms: &[Term], cache: &AmplitudeCache) -> BigRational {
    let mut total = BigRational::zero();
    for t in terms {
        let mut prod = t.coefficient.clone();
        for f in &t.factors {
            prod *= cache.get(f).expect("dependency resolved before evaluation");
        }
        total += prod;
    }
    total
}

/// Fills the cache for `root` and everything it depends on.
fn resolve<D: AiryData + ?Sized>(data: &D, cache: &AmplitudeCache, root: AmplitudeKey) {
    struct Frame {
        key: AmplitudeKey,
        terms: Option<Vec<Term>>,
    }
    let mut stack = vec![Frame { key: root, terms: None }];
    while let Some(frame) = stack.last_mut() {
        if cache.contains(&frame.key) {
            stack.pop();
            continue;
        }
        if frame.terms.is_none() {
            let (first, rest) = frame.key.d.parts().split_first().expect("n >= 1");
            let rest = Partition::new(rest.to_vec());
            let terms = expand(data, frame.key.g, *first, &rest);
            let mut missing: Vec<AmplitudeKey> = terms
                .iter()
                .flat_map(|t| t.factors.iter())
                .filter(|k| !cache.contains(k))
                .cloned()
                .collect();
            missing.sort();
            missing.dedup();
            frame.terms = Some(terms);
            if !missing.is_empty() {
                stack.extend(missing.into_iter().map(|key| Frame { key, terms: None }));
                continue;
            }
        }
        let frame = stack.pop().expect("non-empty");
        let value = evaluate(frame.terms.as_deref().unwrap_or_default(), cache);
        cache.insert(frame.key, value);
    }
}

/// `F_{g;d}` for arbitrary initial data. `d` must be non-empty.
pub fn amplitude<D: AiryData + ?Sized>(
    g: u32,
    d: &Partition,
    data: &D,
    cache: &AmplitudeCache,
) -> BigRational {
    assert!(!d.is_empty(), "amplitudes need at least one marked point");
    if let Some(v) = direct_value(data, g, d.parts()) {
        return v;
    }
    let key = AmplitudeKey { g, d: d.clone() };
    if let Some(v) = cache.get(&key) {
        return v;
    }
    resolve(data, cache, key.clone());
    cache.get(&key).expect("resolved")
}

/// Like [`amplitude`] but performs the outermost recursion step with
/// `parts[0]` as the distinguished index, in the order given. Agreement with
/// [`amplitude`] for every ordering is the symmetry of `F`.
pub fn amplitude_ordered<D: AiryData + ?Sized>(
    g: u32,
    parts: &[u32],
    data: &D,
    cache: &AmplitudeCache,
) -> BigRational {
    assert!(!parts.is_empty(), "amplitudes need at least one marked point");
    if let Some(v) = direct_value(data, g, parts) {
        return v;
    }
    let rest = Partition::new(parts[1..].to_vec());
    let terms = expand(data, g, parts[0], &rest);
    let mut total = BigRational::zero();
    for t in terms {
        let mut prod = t.coefficient;
        for f in &t.factors {
            prod *= amplitude(f.g, &f.d, data, cache);
        }
        total += prod;
    }
    total
}

static WK_CACHE: Lazy<AmplitudeCache> = Lazy::new(AmplitudeCache::new);

/// Process-wide cache used by [`intersection_number`].
pub fn global_cache() -> &'static AmplitudeCache {
    &WK_CACHE
}

/// `⟨τ_{d1} ⋯ τ_{dn}⟩_g` using the process-wide cache.
pub fn intersection_number(g: u32, d: &Partition) -> BigRational {
    intersection_number_with(g, d, &WK_CACHE)
}

pub fn intersection_number_with(g: u32, d: &Partition, cache: &AmplitudeCache) -> BigRational {
    let key = AmplitudeKey { g, d: d.clone() };
    if d.is_empty() || !key.is_in_dimension() {
        return BigRational::zero();
    }
    amplitude(g, d, &WittenKontsevich, cache)
}

/// Every length-`n` partition of `3g - 3 + n` with its intersection number,
/// in descending lexicographic order of partitions.
pub fn amplitude_table(
    g: u32,
    n: u32,
    cache: &AmplitudeCache,
) -> Result<Vec<(Partition, BigRational)>> {
    let dim = SurfaceClass::new(g, n)
        .dimension()
        .ok_or_else(|| Error::Domain(format!("(g, n) = ({g}, {n}) is not stable")))?;
    Ok(partitions_with_length(dim, n as usize)
        .into_iter()
        .map(|p| {
            let v = intersection_number_with(g, &p, cache);
            (p, v)
        })
        .collect())
}

/// Same as [`amplitude_table`], fanning the partitions out over the current
/// rayon pool with one shared cache.
pub fn amplitude_table_parallel(
    g: u32,
    n: u32,
    cache: &AmplitudeCache,
) -> Result<Vec<(Partition, BigRational)>> {
    let dim = SurfaceClass::new(g, n)
        .dimension()
        .ok_or_else(|| Error::Domain(format!("(g, n) = ({g}, {n}) is not stable")))?;
    Ok(partitions_with_length(dim, n as usize)
        .into_par_iter()
        .map(|p| {
            let v = intersection_number_with(g, &p, cache);
            (p, v)
        })
        .collect())
}

/// `⟨1, d⟩_{g,n+1} - (2g - 2 + n) ⟨d⟩_{g,n}`; zero whenever the dilaton
/// equation holds.
pub fn dilaton_residual(g: u32, d: &Partition, cache: &AmplitudeCache) -> Result<BigRational> {
    let s = SurfaceClass::new(g, d.len() as u32);
    if !s.is_stable() {
        return Err(Error::Domain(format!("(g, n) = ({g}, {}) is not stable", d.len())));
    }
    let lhs = intersection_number_with(g, &d.with_part(1), cache);
    let rhs = intersection_number_with(g, d, cache) * BigInt::from(s.euler());
    Ok(lhs - rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::airy::{stable_surfaces, InitialData};

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    /// Direct transcription of the recursion: plain native recursion, no
    /// cache, no multiset grouping, bipartitions as position bitmasks and
    /// sums over the full index range `[0, bound]`.
    fn oracle(g: u32, d: &[u32], bound: u32) -> BigRational {
        let n = d.len();
        if 2 * g as i64 - 2 + n as i64 <= 0 {
            return BigRational::zero();
        }
        if g == 0 && n == 3 {
            return crate::airy::wk_tensor_entry(crate::airy::TensorKind::A, d[0], d[1], d[2]);
        }
        if g == 1 && n == 1 {
            return crate::airy::wk_tensor_entry(crate::airy::TensorKind::D, d[0], 0, 0);
        }
        let d1 = d[0];
        let rest = &d[1..];
        let mut total = BigRational::zero();
        for m in 0..rest.len() {
            for a in 0..=bound {
                let b = crate::airy::wk_b(d1, rest[m], a);
                if b.is_zero() {
                    continue;
                }
                let mut args = vec![a];
                args.extend(rest.iter().enumerate().filter(|(i, _)| *i != m).map(|(_, &x)| x));
                total += b * oracle(g, &args, bound);
            }
        }
        for a in 0..=bound {
            for b in 0..=bound {
                let c = crate::airy::wk_c(d1, a, b);
                if c.is_zero() {
                    continue;
                }
                let mut inner = BigRational::zero();
                if g >= 1 {
                    let mut args = vec![a, b];
                    args.extend_from_slice(rest);
                    inner += oracle(g - 1, &args, bound);
                }
                for mask in 0..(1u32 << rest.len()) {
                    let mut i1 = vec![a];
                    let mut i2 = vec![b];
                    for (i, &x) in rest.iter().enumerate() {
                        if mask & (1 << i) != 0 {
                            i1.push(x);
                        } else {
                            i2.push(x);
                        }
                    }
                    for g1 in 0..=g {
                        inner += oracle(g1, &i1, bound) * oracle(g - g1, &i2, bound);
                    }
                }
                total += c * inner / BigRational::from_integer(2.into());
            }
        }
        total
    }

    #[test]
    fn oracle_reproduces_known_values() {
        assert_eq!(oracle(1, &[0, 2], 4), rat(1, 24));
        assert_eq!(oracle(1, &[2, 0], 4), rat(1, 24));
        assert_eq!(oracle(1, &[1, 1], 4), rat(1, 24));
        assert_eq!(oracle(0, &[1, 0, 0, 0], 4), rat(1, 1));
        assert_eq!(oracle(2, &[4], 6), rat(1, 1152));
    }

    #[test]
    fn engine_matches_oracle_on_small_surfaces() {
        let cache = AmplitudeCache::new();
        for s in stable_surfaces(4) {
            let dim = s.dimension().unwrap();
            for p in partitions_with_length(dim, s.n as usize) {
                let expected = oracle(s.g, p.parts(), dim as u32 + 2);
                assert_eq!(intersection_number_with(s.g, &p, &cache), expected, "{s:?} {p}");
            }
        }
    }

    #[test]
    fn golden_values() {
        let c = AmplitudeCache::new();
        let wk = WittenKontsevich;
        assert_eq!(amplitude(0, &[0, 0, 0].into(), &wk, &c), rat(1, 1));
        assert_eq!(amplitude(1, &[1].into(), &wk, &c), rat(1, 24));
        assert_eq!(amplitude(0, &[0, 0].into(), &wk, &c), rat(0, 1));
        assert_eq!(amplitude(0, &[5].into(), &wk, &c), rat(0, 1));
        assert_eq!(amplitude(1, &[1, 1].into(), &wk, &c), rat(1, 24));
        assert_eq!(amplitude(2, &[4].into(), &wk, &c), rat(1, 1152));
        assert_eq!(intersection_number_with(1, &[0].into(), &c), rat(0, 1));
        assert_eq!(intersection_number_with(1, &[0, 2].into(), &c), rat(1, 24));
        assert_eq!(intersection_number_with(0, &[1, 0, 0, 0].into(), &c), rat(1, 1));
    }

    #[test]
    fn sparse_initial_data_gives_same_amplitudes() {
        let data = InitialData::witten_kontsevich(20);
        let sparse = AmplitudeCache::new();
        let analytic = AmplitudeCache::new();
        for s in stable_surfaces(5) {
            let dim = s.dimension().unwrap();
            for p in partitions_with_length(dim, s.n as usize) {
                assert_eq!(
                    amplitude(s.g, &p, &data, &sparse),
                    intersection_number_with(s.g, &p, &analytic)
                );
            }
        }
        // Without a selection rule, off-dimension amplitudes come out as 0
        // from the recursion itself.
        assert_eq!(amplitude(1, &[1, 0].into(), &data, &sparse), rat(0, 1));
        assert_eq!(amplitude(2, &[2, 1].into(), &data, &sparse), rat(0, 1));
    }

    #[test]
    fn ordered_evaluation_is_symmetric() {
        let c = AmplitudeCache::new();
        let wk = WittenKontsevich;
        let p = Partition::from([3, 2, 1, 1]);
        let canonical = intersection_number_with(2, &p, &c);
        assert!(canonical > BigRational::zero());
        for perm in [[1, 1, 2, 3], [1, 3, 1, 2], [2, 1, 3, 1], [3, 2, 1, 1]] {
            assert_eq!(amplitude_ordered(2, &perm, &wk, &c), canonical);
        }
    }

    #[test]
    fn one_point_closed_form() {
        let c = AmplitudeCache::new();
        let mut denom = BigInt::one();
        for g in 1..=5u32 {
            denom *= BigInt::from(24) * BigInt::from(g);
            assert_eq!(
                intersection_number_with(g, &[3 * g - 2].into(), &c),
                BigRational::new(BigInt::one(), denom.clone())
            );
        }
    }

    #[test]
    fn table_shapes() {
        let c = AmplitudeCache::new();
        assert_eq!(amplitude_table(0, 4, &c).unwrap(), vec![(Partition::from([1, 0, 0, 0]), rat(1, 1))]);
        assert_eq!(amplitude_table(1, 1, &c).unwrap(), vec![(Partition::from([1]), rat(1, 24))]);
        let t = amplitude_table(1, 2, &c).unwrap();
        let keys: Vec<_> = t.iter().map(|(p, _)| p.clone()).collect();
        assert_eq!(keys, vec![Partition::from([2, 0]), Partition::from([1, 1])]);
        assert!(amplitude_table(0, 2, &c).is_err());
        assert_eq!(amplitude_table_parallel(2, 3, &c).unwrap(), amplitude_table(2, 3, &c).unwrap());
    }

    #[test]
    fn dilaton_examples() {
        let c = AmplitudeCache::new();
        assert_eq!(dilaton_residual(1, &[1].into(), &c).unwrap(), rat(0, 1));
        assert_eq!(dilaton_residual(0, &[0, 0, 0].into(), &c).unwrap(), rat(0, 1));
        assert_eq!(dilaton_residual(2, &[4].into(), &c).unwrap(), rat(0, 1));
        assert!(dilaton_residual(0, &[0, 0].into(), &c).is_err());
    }

    #[test]
    fn sub_multiset_weights_count_position_subsets() {
        let rest = Partition::from([2, 2, 1, 0, 0, 0]);
        let splits = sub_multisets(&rest);
        let total: BigInt = splits.iter().map(|(_, _, w)| w.clone()).sum();
        assert_eq!(total, BigInt::from(64));
        for (l, r, _) in &splits {
            assert_eq!(l.len() + r.len(), 6);
        }
    }

    #[test]
    fn cache_persistence_round_trip() {
        let c = AmplitudeCache::new();
        intersection_number_with(3, &[7].into(), &c);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        c.save_jsonl(&path).unwrap();
        let loaded = AmplitudeCache::new();
        assert_eq!(loaded.load_jsonl(&path).unwrap(), c.len());
        assert_eq!(loaded.entries(), c.entries());
    }
}
