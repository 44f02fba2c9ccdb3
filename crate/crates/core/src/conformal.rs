//! Inductive conformal intervals with a sliding window per group of equal
//! marked-point count.
//!
//! Inside a group, samples are ordered by their covariate. A sample's
//! half-width is the `⌈(W+1)(1-α)⌉`-th smallest absolute residual among the
//! `W` samples preceding it; the first `W` samples of a group share the
//! quantile of the group's initial window.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default window length.
pub const DEFAULT_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionSample {
    /// Predicted `log10` value.
    pub prediction: f64,
    /// True `log10` value.
    pub truth: f64,
    /// Group key (number of marked points).
    pub n: u32,
    /// Window ordering key.
    pub covariate: f64,
}

impl PredictionSample {
    /// Sample whose covariate defaults to `|prediction|`.
    pub fn new(prediction: f64, truth: f64, n: u32) -> Self {
        PredictionSample { prediction, truth, n, covariate: prediction.abs() }
    }

    pub fn residual(&self) -> f64 {
        (self.truth - self.prediction).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub samples: usize,
    pub coverage: f64,
    pub mean_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    /// Per-sample half-widths, in input order.
    pub half_widths: Vec<f64>,
    pub coverage: f64,
    /// Mean full interval width `2 · half-width`, in `log10` units.
    pub mean_width: f64,
    pub per_group: BTreeMap<u32, GroupSummary>,
}

/// Rank of the finite-sample-corrected quantile inside a window of `w`,
/// clamped to `w` (it only exceeds `w` when `w < 1/α - 1`).
fn quantile_rank(w: usize, alpha: f64) -> usize {
    let r = ((w as f64 + 1.0) * (1.0 - alpha)).ceil() as usize;
    r.clamp(1, w)
}

fn order_statistic(window: &[f64], rank: usize) -> f64 {
    let mut v = window.to_vec();
    v.sort_by(f64::total_cmp);
    v[rank - 1]
}

pub fn calibrate_intervals(samples: &[PredictionSample], alpha: f64, window: usize) -> Result<IntervalReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if window == 0 {
        return Err(Error::Domain("window must be positive".into()));
    }
    if let Some(s) = samples.iter().find(|s| {
        !(s.prediction.is_finite() && s.truth.is_finite() && s.covariate.is_finite())
    }) {
        return Err(Error::Domain(format!("non-finite sample {s:?}")));
    }

    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        groups.entry(s.n).or_default().push(i);
    }
    if let Some((&group, idx)) = groups.iter().find(|(_, idx)| idx.len() < window) {
        return Err(Error::GroupTooSmall { group, size: idx.len(), window });
    }

    let rank = quantile_rank(window, alpha);
    let mut half_widths = vec![0.0; samples.len()];
    for idx in groups.values_mut() {
        // stable: ties keep input order
        idx.sort_by(|&a, &b| samples[a].covariate.total_cmp(&samples[b].covariate));
        let residuals: Vec<f64> = idx.iter().map(|&i| samples[i].residual()).collect();
        let initial = order_statistic(&residuals[..window], rank);
        for (pos, &i) in idx.iter().enumerate() {
            half_widths[i] = if pos < window {
                initial
            } else {
                order_statistic(&residuals[pos - window..pos], rank)
            };
        }
    }

    let covered = |i: usize| samples[i].residual() <= half_widths[i];
    let per_group = groups
        .iter()
        .map(|(&n, idx)| {
            let hits = idx.iter().filter(|&&i| covered(i)).count();
            let width: f64 = idx.iter().map(|&i| 2.0 * half_widths[i]).sum();
            (
                n,
                GroupSummary {
                    samples: idx.len(),
                    coverage: hits as f64 / idx.len() as f64,
                    mean_width: width / idx.len() as f64,
                },
            )
        })
        .collect();
    let total = samples.len().max(1) as f64;
    Ok(IntervalReport {
        coverage: (0..samples.len()).filter(|&i| covered(i)).count() as f64 / total,
        mean_width: half_widths.iter().map(|h| 2.0 * h).sum::<f64>() / total,
        half_widths,
        per_group,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageCheck {
    pub pass: bool,
    /// `coverage - (1 - alpha)`.
    pub margin: f64,
    pub tolerance: f64,
}

pub const DEFAULT_COVERAGE_TOLERANCE: f64 = 0.03;

/// Passes when the report's coverage is within `tolerance` of `1 - alpha`.
pub fn evaluate_target_coverage(report: &IntervalReport, alpha: f64, tolerance: f64) -> CoverageCheck {
    coverage_check(report.coverage, alpha, tolerance)
}

pub fn coverage_check(coverage: f64, alpha: f64, tolerance: f64) -> CoverageCheck {
    let margin = coverage - (1.0 - alpha);
    // absorb float noise in the subtraction
    CoverageCheck { pass: margin.abs() <= tolerance + 1e-12, margin, tolerance }
}

/// Reads samples from CSV (header `prediction,truth,n[,covariate]`) or JSONL
/// (objects with the same keys). A missing covariate defaults to
/// `|prediction|`.
pub fn read_samples<R: Read>(mut reader: R, jsonl: bool) -> Result<Vec<PredictionSample>> {
    #[derive(Deserialize)]
    struct Row {
        prediction: f64,
        truth: f64,
        n: u32,
        covariate: Option<f64>,
    }
    let into = |r: Row| PredictionSample {
        prediction: r.prediction,
        truth: r.truth,
        n: r.n,
        covariate: r.covariate.unwrap_or(r.prediction.abs()),
    };
    if jsonl {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| Ok(into(serde_json::from_str::<Row>(l)?)))
            .collect()
    } else {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        rdr.deserialize::<Row>().map(|r| Ok(into(r?))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn gaussian(n_samples: usize, groups: &[(u32, f64)], seed: u64) -> Vec<PredictionSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        (0..n_samples)
            .map(|i| {
                let (n, scale) = groups[i % groups.len()];
                let pred: f64 = rng.random_range(-40.0..40.0);
                PredictionSample::new(pred, pred + scale * normal.sample(&mut rng), n)
            })
            .collect()
    }

    #[test]
    fn zero_residuals() {
        let s: Vec<_> = (0..30).map(|i| PredictionSample::new(i as f64, i as f64, 2)).collect();
        let r = calibrate_intervals(&s, 0.1, 20).unwrap();
        assert!(r.half_widths.iter().all(|&h| h == 0.0));
        assert_eq!(r.coverage, 1.0);
        assert_eq!(r.mean_width, 0.0);
    }

    #[test]
    fn constant_residuals() {
        let s: Vec<_> = (0..50).map(|i| PredictionSample::new(i as f64, i as f64 + 0.5, 1)).collect();
        let r = calibrate_intervals(&s, 0.1, 20).unwrap();
        assert!(r.half_widths.iter().all(|&h| h == 0.5));
        assert_eq!(r.coverage, 1.0);
    }

    #[test]
    fn gaussian_coverage_near_target() {
        let s = gaussian(5000, &[(3, 1.0)], 11);
        let r = calibrate_intervals(&s, 0.1, DEFAULT_WINDOW).unwrap();
        assert!((0.87..=0.93).contains(&r.coverage), "coverage {}", r.coverage);
    }

    #[test]
    fn small_group_is_an_error() {
        let mut s = gaussian(200, &[(1, 1.0)], 1);
        s.extend(gaussian(5, &[(7, 1.0)], 2));
        match calibrate_intervals(&s, 0.1, 50) {
            Err(Error::GroupTooSmall { group: 7, size: 5, window: 50 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(calibrate_intervals(&s, 1.5, 5).is_err());
    }

    #[test]
    fn larger_alpha_never_widens() {
        let s = gaussian(600, &[(1, 1.0), (2, 3.0)], 5);
        let mut prev: Option<Vec<f64>> = None;
        for alpha in [0.05, 0.1, 0.2, 0.3, 0.5] {
            let r = calibrate_intervals(&s, alpha, 40).unwrap();
            if let Some(p) = prev {
                assert!(r.half_widths.iter().zip(&p).all(|(a, b)| a <= b));
            }
            prev = Some(r.half_widths);
        }
    }

    #[test]
    fn window_follows_local_scale() {
        // residual scale grows with the covariate; late samples must get
        // wider intervals than early ones
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s: Vec<_> = (0..1000)
            .map(|i| {
                let x = i as f64;
                let noise: f64 = rng.random_range(-1.0..1.0) * (1.0 + x / 100.0);
                PredictionSample { prediction: 0.0, truth: noise, n: 1, covariate: x }
            })
            .collect();
        let r = calibrate_intervals(&s, 0.1, 50).unwrap();
        assert!(r.half_widths[900] > 4.0 * r.half_widths[60]);
    }

    #[test]
    fn coverage_checks() {
        assert!(coverage_check(0.9035, 0.1, 0.03).pass);
        assert!(!coverage_check(0.7479, 0.1, 0.03).pass);
        assert!(coverage_check(0.9, 0.1, 0.03).pass);
        let c = coverage_check(0.95, 0.1, 0.03);
        assert!(!c.pass);
        assert!((c.margin - 0.05).abs() < 1e-12);
    }

    #[test]
    fn reads_csv_and_jsonl() {
        let csv = "prediction,truth,n,covariate\n1.0,1.5,2,3.0\n-2.0,-2.0,3,\n";
        let s = read_samples(csv.as_bytes(), false).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].covariate, 3.0);
        assert_eq!(s[1].covariate, 2.0);
        let jsonl = "{\"prediction\":1.0,\"truth\":0.5,\"n\":1}\n";
        let s = read_samples(jsonl.as_bytes(), true).unwrap();
        assert_eq!(s[0], PredictionSample::new(1.0, 0.5, 1));
    }
}
