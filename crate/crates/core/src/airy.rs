//! Partitions, surfaces and the initial data `(A, B, C, D)` of a quantum
//! Airy structure, with the Witten–Kontsevich specialisation and its sparse
//! COO export.
//!
//! Index conventions: `B^k_{i,j}` is stored under the triple `(i, j, k)` and
//! `C^{j,k}_i` under `(i, j, k)`.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numerics::{double_factorial, format_rational, parse_rational};

/// Unordered tuple of non-negative integers, kept sorted non-increasing.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition(Vec<u32>);

impl Partition {
    /// Canonicalises `parts`. An empty list is allowed here (it is a valid
    /// sub-multiset) but amplitudes require length ≥ 1.
    pub fn new(mut parts: Vec<u32>) -> Self {
        parts.sort_unstable_by(|a, b| b.cmp(a));
        Partition(parts)
    }

    pub fn parts(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weight(&self) -> u64 {
        self.0.iter().map(|&d| d as u64).sum()
    }

    /// Multiset union with one extra part.
    pub fn with_part(&self, part: u32) -> Partition {
        let mut v = self.0.clone();
        let pos = v.partition_point(|&x| x > part);
        v.insert(pos, part);
        Partition(v)
    }

    /// Removes one occurrence of `part`, if present.
    pub fn without_part(&self, part: u32) -> Option<Partition> {
        let pos = self.0.iter().position(|&x| x == part)?;
        let mut v = self.0.clone();
        v.remove(pos);
        Some(Partition(v))
    }

    /// Distinct values with multiplicities, largest value first.
    pub fn multiplicities(&self) -> Vec<(u32, usize)> {
        let mut out: Vec<(u32, usize)> = Vec::new();
        for &p in &self.0 {
            match out.last_mut() {
                Some((v, c)) if *v == p => *c += 1,
                _ => out.push((p, 1)),
            }
        }
        out
    }

    /// Dash-joined form used in CSV files, e.g. `4-1-0`.
    pub fn to_dashed(&self) -> String {
        self.0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("-")
    }

    /// Parses comma- or dash-separated parts in any order.
    pub fn parse(s: &str) -> Result<Partition> {
        let parts = s
            .split([',', '-'])
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<u32>().map_err(|e| Error::Parse(format!("bad part {t:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if parts.is_empty() {
            return Err(Error::Parse(format!("empty partition {s:?}")));
        }
        Ok(Partition::new(parts))
    }
}

impl fmt::Debug for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "({})", s.join(","))
    }
}

impl From<Vec<u32>> for Partition {
    fn from(v: Vec<u32>) -> Self {
        Partition::new(v)
    }
}

impl<const N: usize> From<[u32; N]> for Partition {
    fn from(v: [u32; N]) -> Self {
        Partition::new(v.to_vec())
    }
}

impl Serialize for Partition {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(Partition::new(Vec::<u32>::deserialize(d)?))
    }
}

/// All length-`n` partitions of `weight` into non-negative parts, in
/// descending lexicographic order.
pub fn partitions_with_length(weight: u64, n: usize) -> Vec<Partition> {
    fn rec(remaining: u64, slots: usize, max: u64, prefix: &mut Vec<u32>, out: &mut Vec<Partition>) {
        if slots == 0 {
            if remaining == 0 {
                out.push(Partition(prefix.clone()));
            }
            return;
        }
        // the remaining slots can hold at most `slots * max`
        if remaining > slots as u64 * max {
            return;
        }
        let hi = remaining.min(max);
        let lo = remaining.div_ceil(slots as u64);
        for first in (lo..=hi).rev() {
            prefix.push(first as u32);
            rec(remaining - first, slots - 1, first, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        if weight == 0 {
            out.push(Partition(Vec::new()));
        }
        return out;
    }
    rec(weight, n, weight, &mut Vec::with_capacity(n), &mut out);
    out
}

/// Genus and number of marked points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SurfaceClass {
    pub g: u32,
    pub n: u32,
}

impl SurfaceClass {
    pub fn new(g: u32, n: u32) -> Self {
        SurfaceClass { g, n }
    }

    /// `2g - 2 + n`, i.e. minus the Euler characteristic.
    pub fn euler(&self) -> i64 {
        2 * self.g as i64 - 2 + self.n as i64
    }

    pub fn is_stable(&self) -> bool {
        self.n >= 1 && self.euler() > 0
    }

    /// `3g - 3 + n`, defined for stable surfaces.
    pub fn dimension(&self) -> Option<u64> {
        self.is_stable().then(|| (3 * self.g as i64 - 3 + self.n as i64) as u64)
    }
}

/// Every stable `(g, n)` with `n ≥ 1` and `2g - 2 + n ≤ euler_max`.
pub fn stable_surfaces(euler_max: u32) -> Vec<SurfaceClass> {
    let mut out = Vec::new();
    for g in 0..=(euler_max / 2 + 1) {
        for n in 1..=(euler_max + 2) {
            let s = SurfaceClass::new(g, n);
            if s.is_stable() && s.euler() <= euler_max as i64 {
                out.push(s);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TensorKind {
    A,
    B,
    C,
    D,
}

impl std::str::FromStr for TensorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(TensorKind::A),
            "B" | "b" => Ok(TensorKind::B),
            "C" | "c" => Ok(TensorKind::C),
            "D" | "d" => Ok(TensorKind::D),
            _ => Err(Error::Parse(format!("unknown tensor {s:?}"))),
        }
    }
}

/// One nonzero tensor component. Serialises as `[i, j, k, "p/q"]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooEntry {
    pub i: u32,
    pub j: u32,
    pub k: u32,
    pub value: BigRational,
}

impl Serialize for CooEntry {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        (self.i, self.j, self.k, format_rational(&self.value)).serialize(s)
    }
}

impl<'de> Deserialize<'de> for CooEntry {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let (i, j, k, v) = <(u32, u32, u32, String)>::deserialize(d)?;
        let value = parse_rational(&v).map_err(D::Error::custom)?;
        if value.is_zero() {
            return Err(D::Error::custom("COO entries must be nonzero"));
        }
        Ok(CooEntry { i, j, k, value })
    }
}

fn odd_df(m: i64) -> BigInt {
    double_factorial(m).expect("argument is at least -1")
}

/// `B^k_{i,j} = δ_{i+j,k+1} (2k+1)!! / ((2i+1)!! (2j-1)!!)`.
pub fn wk_b(i: u32, j: u32, k: u32) -> BigRational {
    if i as u64 + j as u64 != k as u64 + 1 {
        return BigRational::zero();
    }
    let (i, j, k) = (i as i64, j as i64, k as i64);
    BigRational::new(odd_df(2 * k + 1), odd_df(2 * i + 1) * odd_df(2 * j - 1))
}

/// `C^{j,k}_i = δ_{i,j+k+2} (2j+1)!! (2k+1)!! / (2i+1)!!`.
pub fn wk_c(i: u32, j: u32, k: u32) -> BigRational {
    if i as u64 != j as u64 + k as u64 + 2 {
        return BigRational::zero();
    }
    let (i, j, k) = (i as i64, j as i64, k as i64);
    BigRational::new(odd_df(2 * j + 1) * odd_df(2 * k + 1), odd_df(2 * i + 1))
}

/// Witten–Kontsevich initial data entry. `j` and `k` are ignored for `D`.
///
/// `A_{i,j,k}` is 1 only at `i = j = k = 0`: that is the single in-dimension
/// genus-zero three-point partition.
pub fn wk_tensor_entry(which: TensorKind, i: u32, j: u32, k: u32) -> BigRational {
    match which {
        TensorKind::A => {
            if i == 0 && j == 0 && k == 0 {
                BigRational::one()
            } else {
                BigRational::zero()
            }
        }
        TensorKind::B => wk_b(i, j, k),
        TensorKind::C => wk_c(i, j, k),
        TensorKind::D => {
            if i == 1 {
                BigRational::new(1.into(), 24.into())
            } else {
                BigRational::zero()
            }
        }
    }
}

/// Nonzero `B` or `C` entries with all indices in `[0, dim_max]`, sorted by
/// `(i, j, k)`.
pub fn generate_coo(which: TensorKind, dim_max: u32) -> Result<Vec<CooEntry>> {
    let mut out = Vec::new();
    match which {
        TensorKind::B => {
            for i in 0..=dim_max {
                for j in 0..=dim_max {
                    if i + j == 0 || i + j - 1 > dim_max {
                        continue;
                    }
                    let k = i + j - 1;
                    out.push(CooEntry { i, j, k, value: wk_b(i, j, k) });
                }
            }
        }
        TensorKind::C => {
            for i in 2..=dim_max {
                for j in 0..=(i - 2) {
                    let k = i - 2 - j;
                    out.push(CooEntry { i, j, k, value: wk_c(i, j, k) });
                }
            }
        }
        other => {
            return Err(Error::Domain(format!("COO export is defined for B and C, not {other:?}")))
        }
    }
    Ok(out)
}

/// Read access to the initial data needed by the recursion. Implementations
/// only report nonzero entries from the row accessors.
pub trait AiryData: Sync {
    fn a(&self, i: u32, j: u32, k: u32) -> BigRational;
    fn d(&self, i: u32) -> BigRational;
    /// Nonzero `(k, B^k_{i,j})`.
    fn b_row(&self, i: u32, j: u32) -> Vec<(u32, BigRational)>;
    /// Nonzero `(j, k, C^{j,k}_i)`.
    fn c_row(&self, i: u32) -> Vec<(u32, u32, BigRational)>;
    /// If amplitudes are known to vanish unless the partition weight equals
    /// a fixed value, that value. Lets the recursion prune zero branches.
    fn selection_weight(&self, _g: u32, _n: usize) -> Option<u64> {
        None
    }
}

/// The Witten–Kontsevich data evaluated analytically on demand.
#[derive(Debug, Clone, Copy, Default)]
pub struct WittenKontsevich;

impl AiryData for WittenKontsevich {
    fn a(&self, i: u32, j: u32, k: u32) -> BigRational {
        wk_tensor_entry(TensorKind::A, i, j, k)
    }

    fn d(&self, i: u32) -> BigRational {
        wk_tensor_entry(TensorKind::D, i, 0, 0)
    }

    fn b_row(&self, i: u32, j: u32) -> Vec<(u32, BigRational)> {
        if i + j == 0 {
            return Vec::new();
        }
        let k = i + j - 1;
        vec![(k, wk_b(i, j, k))]
    }

    fn c_row(&self, i: u32) -> Vec<(u32, u32, BigRational)> {
        if i < 2 {
            return Vec::new();
        }
        (0..=i - 2).map(|j| (j, i - 2 - j, wk_c(i, j, i - 2 - j))).collect()
    }

    fn selection_weight(&self, g: u32, n: usize) -> Option<u64> {
        SurfaceClass::new(g, n as u32).dimension()
    }
}

/// Sparse initial data. Zero values are never stored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InitialData {
    pub a: BTreeMap<(u32, u32, u32), BigRational>,
    pub b: BTreeMap<(u32, u32, u32), BigRational>,
    pub c: BTreeMap<(u32, u32, u32), BigRational>,
    pub d: BTreeMap<u32, BigRational>,
}

impl InitialData {
    /// Materialises the Witten–Kontsevich tensors restricted to `[0, dim_max]`.
    pub fn witten_kontsevich(dim_max: u32) -> Self {
        let mut data = InitialData::default();
        data.a.insert((0, 0, 0), BigRational::one());
        if dim_max >= 1 {
            data.d.insert(1, wk_tensor_entry(TensorKind::D, 1, 0, 0));
        }
        for e in generate_coo(TensorKind::B, dim_max).unwrap() {
            data.b.insert((e.i, e.j, e.k), e.value);
        }
        for e in generate_coo(TensorKind::C, dim_max).unwrap() {
            data.c.insert((e.i, e.j, e.k), e.value);
        }
        data
    }

    pub fn insert(&mut self, which: TensorKind, i: u32, j: u32, k: u32, value: BigRational) {
        if value.is_zero() {
            return;
        }
        match which {
            TensorKind::A => self.a.insert((i, j, k), value),
            TensorKind::B => self.b.insert((i, j, k), value),
            TensorKind::C => self.c.insert((i, j, k), value),
            TensorKind::D => self.d.insert(i, value),
        };
    }

    /// Checks `A_{i,a,b} = A_{i,b,a}` and `C^{a,b}_i = C^{b,a}_i`.
    pub fn check_symmetry(&self) -> Result<()> {
        let zero = BigRational::zero();
        for (&(i, j, k), v) in &self.a {
            if self.a.get(&(i, k, j)).unwrap_or(&zero) != v {
                return Err(Error::Domain(format!("A not symmetric at ({i},{j},{k})")));
            }
        }
        for (&(i, j, k), v) in &self.c {
            if self.c.get(&(i, k, j)).unwrap_or(&zero) != v {
                return Err(Error::Domain(format!("C not symmetric at ({i},{j},{k})")));
            }
        }
        Ok(())
    }

    pub fn has_negative_entries(&self) -> bool {
        self.a.values().chain(self.b.values()).chain(self.c.values()).chain(self.d.values())
            .any(|v| v.is_negative())
    }
}

impl AiryData for InitialData {
    fn a(&self, i: u32, j: u32, k: u32) -> BigRational {
        self.a.get(&(i, j, k)).cloned().unwrap_or_else(BigRational::zero)
    }

    fn d(&self, i: u32) -> BigRational {
        self.d.get(&i).cloned().unwrap_or_else(BigRational::zero)
    }

    fn b_row(&self, i: u32, j: u32) -> Vec<(u32, BigRational)> {
        self.b.range((i, j, 0)..=(i, j, u32::MAX)).map(|(&(_, _, k), v)| (k, v.clone())).collect()
    }

    fn c_row(&self, i: u32) -> Vec<(u32, u32, BigRational)> {
        self.c
            .range((i, 0, 0)..=(i, u32::MAX, u32::MAX))
            .map(|(&(_, j, k), v)| (j, k, v.clone()))
            .collect()
    }
}
