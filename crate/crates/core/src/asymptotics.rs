//! Large-genus behaviour of intersection numbers.
//!
//! The leading form is
//!
//! ```text
//! ⟨d⟩_{g,n} Π(2d_i+1)!!  ~  2^n/(4π) · Γ(2g-2+n) / A^{2g-2+n}
//! ```
//!
//! with `A = 2/3`, and the ratio of the two sides admits an expansion
//! `1 + (2/3)α₁/(2g-3+n) + c₂/(2g-3+n)² + ⋯`. Everything here works in
//! `log10` to stay clear of overflow.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::airy::{partitions_with_length, Partition, SurfaceClass};
use crate::error::{Error, Result};
use crate::numerics::{log10_odd_double_factorial_product, log10_of_rational, log_gamma};
use crate::recursion::{intersection_number_with, AmplitudeCache};

/// The exponential growth constant of the leading asymptotic.
pub const GROWTH_CONSTANT: f64 = 2.0 / 3.0;

/// Candidate growth constant `num / denom` with both in `1..=10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GrowthHypothesis {
    pub numerator: u32,
    pub denominator: u32,
}

impl GrowthHypothesis {
    pub fn new(numerator: u32, denominator: u32) -> Result<Self> {
        if !(1..=10).contains(&numerator) || !(1..=10).contains(&denominator) {
            return Err(Error::Domain(format!(
                "growth hypothesis {numerator}/{denominator} outside 1..=10"
            )));
        }
        if numerator == denominator {
            return Err(Error::Domain("A = 1 is excluded as a trivial hypothesis".into()));
        }
        Ok(GrowthHypothesis { numerator, denominator })
    }

    pub fn value(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }

    /// Lowest-terms form, used to collapse duplicates such as 2/3 and 4/6.
    pub fn reduced(&self) -> (u32, u32) {
        let g = num_integer::gcd(self.numerator, self.denominator);
        (self.numerator / g, self.denominator / g)
    }

    /// All 90 candidates, numerator-major.
    pub fn grid() -> Vec<GrowthHypothesis> {
        (1..=10)
            .flat_map(|num| (1..=10).map(move |den| (num, den)))
            .filter(|(num, den)| num != den)
            .map(|(numerator, denominator)| GrowthHypothesis { numerator, denominator })
            .collect()
    }
}

fn check_in_dimension(g: u32, d: &Partition) -> Result<SurfaceClass> {
    let s = SurfaceClass::new(g, d.len() as u32);
    match s.dimension() {
        None => Err(Error::Domain(format!("(g, n) = ({g}, {}) is not stable", d.len()))),
        Some(dim) if dim != d.weight() => Err(Error::Domain(format!(
            "partition {d} has weight {} but d_(g,n) = {dim}",
            d.weight()
        ))),
        Some(_) => Ok(s),
    }
}

/// `log10 [2^n/(4π) · Γ(2g-2+n) / A^{2g-2+n}]`.
fn log10_growth_side(s: SurfaceClass, growth: f64) -> Result<f64> {
    if !(growth > 0.0) {
        return Err(Error::Domain(format!("growth constant must be positive, got {growth}")));
    }
    let chi = s.euler() as f64;
    Ok(s.n as f64 * std::f64::consts::LOG10_2 - (4.0 * std::f64::consts::PI).log10()
        + log_gamma(chi)? / std::f64::consts::LN_10
        - chi * growth.log10())
}

/// `log10` of the leading large-genus prediction for `⟨d⟩_{g,n}` with growth
/// constant `growth`.
pub fn leading_asymptotic_log(g: u32, d: &Partition, growth: f64) -> Result<f64> {
    let s = check_in_dimension(g, d)?;
    Ok(log10_growth_side(s, growth)? - log10_odd_double_factorial_product(d.parts()))
}

/// Exact intersection number divided by its leading asymptotic (`A = 2/3`).
pub fn normalized_ratio(g: u32, d: &Partition, cache: &AmplitudeCache) -> Result<f64> {
    let s = check_in_dimension(g, d)?;
    let exact = log10_of_rational(&intersection_number_with(g, d, cache));
    let lhs = exact.log10_magnitude + log10_odd_double_factorial_product(d.parts());
    let rhs = log10_growth_side(s, GROWTH_CONSTANT)?;
    Ok(10f64.powf(lhs - rhs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioEntry {
    pub g: u32,
    pub n: u32,
    pub d: Partition,
    pub ratio: f64,
    /// `n² > g`: the asymptotic is only established for `n = o(√g)`.
    pub outside_regime: bool,
}

impl RatioEntry {
    /// `2g - 3 + n`, the expansion variable's reciprocal.
    pub fn expansion_denominator(&self) -> i64 {
        2 * self.g as i64 - 3 + self.n as i64
    }
}

/// Normalised ratios, sorted by `2g - 2 + n`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RatioSeries {
    pub entries: Vec<RatioEntry>,
}

impl RatioSeries {
    /// Ratios for every in-dimension partition of length `n` with
    /// `g_min ≤ g ≤ g_max` (unstable genera are skipped).
    pub fn build(n: u32, g_min: u32, g_max: u32, cache: &AmplitudeCache) -> Result<Self> {
        let mut entries = Vec::new();
        for g in g_min..=g_max {
            let s = SurfaceClass::new(g, n);
            let Some(dim) = s.dimension() else { continue };
            for d in partitions_with_length(dim, n as usize) {
                let ratio = normalized_ratio(g, &d, cache)?;
                entries.push(RatioEntry { g, n, d, ratio, outside_regime: (n * n) > g });
            }
        }
        Ok(Self::from_entries(entries))
    }

    pub fn from_entries(mut entries: Vec<RatioEntry>) -> Self {
        entries.sort_by_key(|e| (2 * e.g as i64 - 2 + e.n as i64, e.g));
        RatioSeries { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Columns `g,n,partition,ratio`, partition dash-joined.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["g", "n", "partition", "ratio"])?;
        for e in &self.entries {
            out.write_record([
                e.g.to_string(),
                e.n.to_string(),
                e.d.to_dashed(),
                format!("{:.17e}", e.ratio),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Least-squares fit of `R - 1 = Σ_{j=1..k} c_j x^j`, `x = 1/(2g-3+n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// `c_1..c_k` as fitted.
    pub series_coefficients: Vec<f64>,
    /// `α₁ = c₁ / (2/3)` followed by `c_2..c_k` unchanged.
    pub alphas: Vec<f64>,
    pub residual_sum_of_squares: f64,
    pub points: usize,
}

impl FitReport {
    pub fn alpha1(&self) -> f64 {
        self.alphas[0]
    }
}

/// Fits `order` subleading coefficients. Entries with `2g - 3 + n = 0`
/// (the base surfaces) have no expansion variable and are skipped.
pub fn fit_subleading(series: &RatioSeries, order: usize) -> Result<FitReport> {
    if order == 0 {
        return Err(Error::Domain("fit order must be at least 1".into()));
    }
    let points: Vec<(f64, f64)> = series
        .entries
        .iter()
        .filter(|e| e.expansion_denominator() > 0)
        .map(|e| (1.0 / e.expansion_denominator() as f64, e.ratio - 1.0))
        .collect();
    let mut distinct: Vec<i64> =
        series.entries.iter().map(|e| e.expansion_denominator()).filter(|&x| x > 0).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < order + 1 {
        return Err(Error::RankDeficient(format!(
            "order {order} needs at least {} distinct 2g-3+n values, got {}",
            order + 1,
            distinct.len()
        )));
    }

    let design = DMatrix::from_fn(points.len(), order, |r, c| points[r].0.powi(c as i32 + 1));
    let target = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    let normal = design.transpose() * &design;
    let rhs = design.transpose() * &target;
    let chol = normal.cholesky().ok_or_else(|| {
        Error::RankDeficient("normal equations are not positive definite".into())
    })?;
    let coef = chol.solve(&rhs);
    let residual = &target - &design * &coef;

    let series_coefficients: Vec<f64> = coef.iter().copied().collect();
    let mut alphas = series_coefficients.clone();
    alphas[0] /= GROWTH_CONSTANT;
    Ok(FitReport {
        series_coefficients,
        alphas,
        residual_sum_of_squares: residual.norm_squared(),
        points: points.len(),
    })
}
