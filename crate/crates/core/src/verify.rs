//! Self-checks of the recursion against identities it must satisfy.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::airy::{partitions_with_length, stable_surfaces, InitialData, Partition, SurfaceClass, WittenKontsevich};
use crate::error::{Error, Result};
use crate::numerics::format_rational;
use crate::recursion::{amplitude, amplitude_ordered, dilaton_residual, intersection_number_with, AmplitudeCache};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Suite {
    Dilaton,
    OnePoint,
    Symmetry,
    Selection,
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dilaton" => Ok(Suite::Dilaton),
            "onepoint" | "one-point" => Ok(Suite::OnePoint),
            "symmetry" => Ok(Suite::Symmetry),
            "selection" => Ok(Suite::Selection),
            _ => Err(Error::Parse(format!("unknown suite {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub euler_max: u32,
    pub checked: usize,
    /// One line per failed check.
    pub failures: Vec<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn run_suite(suite: Suite, euler_max: u32, cache: &AmplitudeCache) -> SuiteReport {
    let (checked, failures) = match suite {
        Suite::Dilaton => dilaton(euler_max, cache),
        Suite::OnePoint => one_point(euler_max, cache),
        Suite::Symmetry => symmetry(euler_max, 1000, 0, cache),
        Suite::Selection => selection(euler_max),
    };
    SuiteReport { suite, euler_max, checked, failures }
}

fn in_dimension(euler_max: u32) -> impl Iterator<Item = (SurfaceClass, Partition)> {
    stable_surfaces(euler_max).into_iter().flat_map(|s| {
        let dim = s.dimension().expect("stable");
        partitions_with_length(dim, s.n as usize).into_iter().map(move |d| (s, d))
    })
}

fn dilaton(euler_max: u32, cache: &AmplitudeCache) -> (usize, Vec<String>) {
    let mut checked = 0;
    let mut failures = Vec::new();
    for (s, d) in in_dimension(euler_max) {
        checked += 1;
        match dilaton_residual(s.g, &d, cache) {
            Ok(r) if r.is_zero() => {}
            Ok(r) => failures.push(format!("g={} d={d}: residual {}", s.g, format_rational(&r))),
            Err(e) => failures.push(format!("g={} d={d}: {e}", s.g)),
        }
    }
    (checked, failures)
}

/// `1 / (24^g g!)`.
pub fn one_point_closed_form(g: u32) -> BigRational {
    let mut den = BigInt::one();
    for k in 1..=g {
        den *= 24 * k;
    }
    BigRational::new(BigInt::one(), den)
}

fn one_point(euler_max: u32, cache: &AmplitudeCache) -> (usize, Vec<String>) {
    let mut failures = Vec::new();
    let mut checked = 0;
    for g in (1..).take_while(|g| 2 * g - 1 <= euler_max) {
        checked += 1;
        let got = intersection_number_with(g, &Partition::from(vec![3 * g - 2]), cache);
        let want = one_point_closed_form(g);
        if got != want {
            failures.push(format!("g={g}: {} != {}", format_rational(&got), format_rational(&want)));
        }
    }
    (checked, failures)
}

/// Evaluates `trials` random orderings (spread round-robin over the
/// in-dimension partitions) with the outermost index taken in that order.
pub fn symmetry(euler_max: u32, trials: usize, seed: u64, cache: &AmplitudeCache) -> (usize, Vec<String>) {
    let pool: Vec<_> = in_dimension(euler_max).filter(|(_, d)| d.len() > 1).collect();
    let mut failures = Vec::new();
    if pool.is_empty() {
        return (0, failures);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..trials {
        let (s, d) = &pool[t % pool.len()];
        let mut order = d.parts().to_vec();
        order.shuffle(&mut rng);
        let canonical = intersection_number_with(s.g, d, cache);
        let ordered = amplitude_ordered(s.g, &order, &WittenKontsevich, cache);
        if ordered != canonical {
            failures.push(format!("g={} order {order:?}: {} != {}", s.g, format_rational(&ordered), format_rational(&canonical)));
        }
    }
    (trials, failures)
}

/// Off-dimension partitions of every stable surface with `2g-2+n ≤ euler_max`,
/// weights up to `d_(g,n) + 2`, evaluated through the recursion on the
/// explicit tensors (which carry no selection rule of their own).
fn selection(euler_max: u32) -> (usize, Vec<String>) {
    let mut checked = 0;
    let mut failures = Vec::new();
    let surfaces = stable_surfaces(euler_max);
    let top = surfaces.iter().filter_map(|s| s.dimension()).max().unwrap_or(0) + 2;
    let data = InitialData::witten_kontsevich(top as u32 + 2);
    let cache = AmplitudeCache::new();
    for s in surfaces {
        let dim = s.dimension().expect("stable");
        for w in (0..=dim + 2).filter(|&w| w != dim) {
            for d in partitions_with_length(w, s.n as usize) {
                checked += 1;
                let v = amplitude(s.g, &d, &data, &cache);
                if !v.is_zero() {
                    failures.push(format!("g={} d={d}: {} off dimension", s.g, format_rational(&v)));
                }
            }
        }
    }
    (checked, failures)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass_on_small_surfaces() {
        let cache = AmplitudeCache::new();
        for suite in [Suite::Dilaton, Suite::OnePoint, Suite::Symmetry, Suite::Selection] {
            let r = run_suite(suite, 4, &cache);
            assert!(r.passed(), "{suite:?}: {:?}", r.failures);
            assert!(r.checked > 0);
        }
    }

    #[test]
    fn closed_form() {
        assert_eq!(one_point_closed_form(1), BigRational::new(1.into(), 24.into()));
        assert_eq!(one_point_closed_form(2), BigRational::new(1.into(), 1152.into()));
    }

    #[test]
    fn suite_names() {
        assert_eq!("onepoint".parse::<Suite>().unwrap(), Suite::OnePoint);
        assert!("nope".parse::<Suite>().is_err());
    }
}
