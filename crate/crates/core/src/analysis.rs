//! Embedding-space utilities: cosine similarity, the Dilaton relation
//! matrix, linear and non-linear probes, the growth-constant hypothesis scan
//! and the Talking-Modalities loss.

use std::io::Read;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::airy::Partition;
use crate::asymptotics::{leading_asymptotic_log, GrowthHypothesis, GROWTH_CONSTANT};
use crate::conformal::{calibrate_intervals, PredictionSample, DEFAULT_WINDOW};
use crate::dra::{fit_regressor, r_squared, ActivationKind, NetConfig};
use crate::error::{Error, Result};
use crate::recursion::AmplitudeKey;

/// Row-major sample embeddings, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(DMatrix<f64>);

impl FeatureMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("feature matrix has non-finite entries".into()));
        }
        Ok(FeatureMatrix(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Domain("ragged feature rows".into()));
        }
        Self::new(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.0.row(i).iter().copied().collect()
    }
}

/// `S_ij = <v_i, v_j> / (|v_i| |v_j|)` with an exact unit diagonal.
pub fn cosine_matrix(v: &FeatureMatrix) -> Result<DMatrix<f64>> {
    let m = v.matrix();
    let norms: Vec<f64> = m.row_iter().map(|r| r.norm()).collect();
    if let Some(i) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::Domain(format!("row {i} is zero; cosine similarity undefined")));
    }
    let gram = m * m.transpose();
    let n = m.nrows();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            gram[(i, j)] / (norms[i] * norms[j])
        }
    }))
}

/// `true` at `(i, j)` when one key is the other with an extra `τ₁` at the
/// same genus; symmetric.
pub fn dilaton_matrix(keys: &[AmplitudeKey]) -> Vec<Vec<bool>> {
    let n = keys.len();
    let mut out = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (&keys[i], &keys[j]);
            if a.g == b.g && a.d == b.d.with_part(1) {
                out[i][j] = true;
                out[j][i] = true;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProbeKind {
    Linear,
    NonLinear,
}

impl std::str::FromStr for ProbeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(ProbeKind::Linear),
            "non-linear" | "nonlinear" | "mlp" => Ok(ProbeKind::NonLinear),
            _ => Err(Error::Parse(format!("unknown probe kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub kind: ProbeKind,
    /// Ridge penalty, linear probes only. The intercept is not penalised.
    pub ridge: f64,
    pub seed: u64,
    /// Training steps for the non-linear probe.
    pub steps: usize,
    pub alpha: f64,
}

impl ProbeConfig {
    pub fn linear(ridge: f64, seed: u64) -> Self {
        ProbeConfig { kind: ProbeKind::Linear, ridge, seed, steps: 0, alpha: 0.1 }
    }

    pub fn non_linear(seed: u64) -> Self {
        ProbeConfig { kind: ProbeKind::NonLinear, ridge: 0.0, seed, steps: 1500, alpha: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub kind: ProbeKind,
    pub held_out_r2: f64,
    pub coverage: f64,
    /// Mean conformal interval width on the held-out rows.
    pub width: f64,
    /// Conformal window actually used (shrunk to the smallest held-out group).
    pub window: usize,
    pub train_rows: usize,
    pub test_rows: usize,
}

/// Ridge regression with an unpenalised intercept, on centred columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub intercept: f64,
    pub weights: DVector<f64>,
}

impl LinearModel {
    pub fn fit(x: &DMatrix<f64>, y: &[f64], ridge: f64) -> Result<Self> {
        if !(ridge >= 0.0) {
            return Err(Error::Domain(format!("ridge penalty must be >= 0, got {ridge}")));
        }
        let (rows, cols) = x.shape();
        let x_mean = DVector::from_fn(cols, |j, _| x.column(j).mean());
        let y_mean = y.iter().sum::<f64>() / rows as f64;
        let xc = DMatrix::from_fn(rows, cols, |i, j| x[(i, j)] - x_mean[j]);
        let yc = DVector::from_fn(rows, |i, _| y[i] - y_mean);

        let weights = if ridge == 0.0 {
            let svd = xc.clone().svd(true, true);
            let max = svd.singular_values.max();
            let tol = max * f64::EPSILON * rows.max(cols) as f64;
            if cols > 0 && (max == 0.0 || svd.singular_values.min() <= tol) {
                return Err(Error::RankDeficient(
                    "design matrix is rank deficient; use a ridge penalty > 0".into(),
                ));
            }
            svd.solve(&yc, tol).map_err(|e| Error::RankDeficient(e.to_string()))?
        } else {
            let mut gram = xc.transpose() * &xc;
            for j in 0..cols {
                gram[(j, j)] += ridge;
            }
            let rhs = xc.transpose() * &yc;
            gram.cholesky()
                .ok_or_else(|| Error::RankDeficient("ridge system is not positive definite".into()))?
                .solve(&rhs)
        };
        let intercept = y_mean - weights.dot(&x_mean);
        Ok(LinearModel { intercept, weights })
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (x * &self.weights).iter().map(|v| v + self.intercept).collect()
    }
}

/// Seeded shuffle into `(train, test)` index sets, 80/20.
pub fn split_indices(rows: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..rows).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = rows.div_ceil(5);
    let train = idx.split_off(test);
    (train, idx)
}

fn select_rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)])
}

/// Trains a probe on 80% of the rows and reports held-out R² and conformal
/// interval quality. `groups` keys the conformal windows (usually `n`); all
/// rows share one group when absent.
pub fn fit_probe(
    features: &FeatureMatrix,
    targets: &[f64],
    groups: Option<&[u32]>,
    config: &ProbeConfig,
) -> Result<ProbeReport> {
    let rows = features.rows();
    if rows < 20 {
        return Err(Error::Domain(format!("probing needs at least 20 rows, got {rows}")));
    }
    if targets.len() != rows || groups.is_some_and(|g| g.len() != rows) {
        return Err(Error::Domain("features, targets and groups must be row-aligned".into()));
    }
    let (train, test) = split_indices(rows, config.seed);
    let x_train = select_rows(features.matrix(), &train);
    let x_test = select_rows(features.matrix(), &test);
    let y_train: Vec<f64> = train.iter().map(|&i| targets[i]).collect();
    let y_test: Vec<f64> = test.iter().map(|&i| targets[i]).collect();

    let pred = match config.kind {
        ProbeKind::Linear => LinearModel::fit(&x_train, &y_train, config.ridge)?.predict(&x_test),
        ProbeKind::NonLinear => {
            let mut net = NetConfig::mlp_64_32(ActivationKind::Dra, config.seed);
            net.steps = config.steps;
            let to_rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
                m.row_iter().map(|r| r.iter().copied().collect()).collect()
            };
            let model = fit_regressor(&net, &to_rows(&x_train), &y_train)?;
            if let Some(msg) = model.diverged {
                return Err(Error::Diverged(msg));
            }
            model.predict(&to_rows(&x_test))
        }
    };
    let held_out_r2 = r_squared(&y_test, &pred)?;

    let samples: Vec<PredictionSample> = test
        .iter()
        .zip(&pred)
        .map(|(&i, &p)| PredictionSample::new(p, targets[i], groups.map_or(0, |g| g[i])))
        .collect();
    let mut sizes = std::collections::BTreeMap::new();
    for s in &samples {
        *sizes.entry(s.n).or_insert(0usize) += 1;
    }
    let window = DEFAULT_WINDOW.min(sizes.values().copied().min().unwrap_or(1)).max(1);
    let intervals = calibrate_intervals(&samples, config.alpha, window)?;
    Ok(ProbeReport {
        kind: config.kind,
        held_out_r2,
        coverage: intervals.coverage,
        width: intervals.mean_width,
        window,
        train_rows: train.len(),
        test_rows: test.len(),
    })
}

/// `log10 I_j` for growth constant `growth`, optionally including the first
/// subleading correction `growth · α₁ / (2g-3+n)`.
pub fn hypothesis_target(key: &AmplitudeKey, growth: f64, alpha1: Option<f64>) -> Result<f64> {
    let mut t = leading_asymptotic_log(key.g, &key.d, growth)?;
    if let Some(a1) = alpha1 {
        let x = 2 * key.g as i64 - 3 + key.n() as i64;
        if x > 0 {
            let factor = 1.0 + growth * a1 / x as f64;
            if !(factor > 0.0) {
                return Err(Error::Domain(format!("subleading factor {factor} is not positive")));
            }
            t += factor.log10();
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub hypothesis: GrowthHypothesis,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthScan {
    /// All 90 hypotheses, best first.
    pub ranked: Vec<ScanEntry>,
    /// One entry per reduced fraction `(num, den)`, best first.
    pub collapsed: Vec<((u32, u32), f64)>,
}

impl GrowthScan {
    pub fn best(&self) -> &ScanEntry {
        &self.ranked[0]
    }
}

/// Probes every grid hypothesis with the same split and ranks them by
/// held-out R².
pub fn scan_growth_constant(
    features: &FeatureMatrix,
    keys: &[AmplitudeKey],
    config: &ProbeConfig,
    alpha1: Option<f64>,
) -> Result<GrowthScan> {
    if keys.len() != features.rows() {
        return Err(Error::Domain("features and keys must be row-aligned".into()));
    }
    let groups: Vec<u32> = keys.iter().map(|k| k.n() as u32).collect();
    let mut ranked = GrowthHypothesis::grid()
        .into_par_iter()
        .map(|h| {
            let targets = keys
                .iter()
                .map(|k| hypothesis_target(k, h.value(), alpha1))
                .collect::<Result<Vec<_>>>()?;
            let report = fit_probe(features, &targets, Some(&groups), config)?;
            Ok(ScanEntry { hypothesis: h, r2: report.held_out_r2 })
        })
        .collect::<Result<Vec<_>>>()?;
    // stable sort keeps grid order among ties
    ranked.sort_by(|a, b| b.r2.total_cmp(&a.r2));
    let mut collapsed: Vec<((u32, u32), f64)> = Vec::new();
    for e in &ranked {
        let r = e.hypothesis.reduced();
        if !collapsed.iter().any(|(c, _)| *c == r) {
            collapsed.push((r, e.r2));
        }
    }
    Ok(GrowthScan { ranked, collapsed })
}

/// Stand-in embeddings for testing the probing pipeline without a trained
/// model: a few polynomial transforms of the `A = 2/3` log-target followed by
/// `noise_cols` columns of independent standard normal noise.
///
/// `g` and `n` are deliberately absent: a linear probe could otherwise add
/// any multiple of `2g-2+n` and fit every hypothesis equally well.
pub fn synthetic_features(keys: &[AmplitudeKey], noise_cols: usize, seed: u64) -> Result<FeatureMatrix> {
    use rand_distr::{Distribution, StandardNormal};
    let targets = keys
        .iter()
        .map(|k| hypothesis_target(k, GROWTH_CONSTANT, None))
        .collect::<Result<Vec<_>>>()?;
    let scale = targets.iter().fold(1.0f64, |m, t| m.max(t.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = targets
        .iter()
        .map(|&t| {
            let u = t / scale;
            let mut row = vec![t, u * u, u * u * u];
            row.extend((0..noise_cols).map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)));
            row
        })
        .collect();
    FeatureMatrix::from_rows(&rows)
}

fn standardized(m: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    let rows = m.nrows() as f64;
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows;
        if var == 0.0 {
            return Err(Error::Domain(format!("column {j} of {name} has zero variance")));
        }
        let sd = var.sqrt();
        col.apply(|v| *v = (*v - mean) / sd);
    }
    Ok(out)
}

/// `Σ_i (1 - C_ii)² + λ Σ_{i≠j} C_ij²` with `C` the cross-correlation of the
/// column-standardised modalities.
pub fn tm_loss(z_b: &FeatureMatrix, z_d: &FeatureMatrix, lambda: f64) -> Result<f64> {
    if z_b.matrix().shape() != z_d.matrix().shape() {
        return Err(Error::Domain("modalities must have equal shapes".into()));
    }
    if z_b.rows() < 2 {
        return Err(Error::Domain("batch must contain at least 2 rows".into()));
    }
    let a = standardized(z_b.matrix(), "Z_B")?;
    let b = standardized(z_d.matrix(), "Z_d")?;
    let c = a.transpose() * b / z_b.rows() as f64;
    let mut on = 0.0;
    let mut off = 0.0;
    for ((i, j), v) in c.iter().enumerate().map(|(k, v)| ((k % c.nrows(), k / c.nrows()), v)) {
        if i == j {
            on += (1.0 - v).powi(2);
        } else {
            off += v * v;
        }
    }
    Ok(on + lambda * off)
}

/// Reads a feature CSV with header `g,n,d,<feature columns...>`, where `d` is
/// a dash- or comma-separated partition (quoted if comma-separated).
pub fn read_feature_csv<R: Read>(reader: R) -> Result<(Vec<AmplitudeKey>, FeatureMatrix)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let names: Vec<&str> = header.iter().take(3).collect();
    if names != ["g", "n", "d"] || header.len() < 4 {
        return Err(Error::Parse(
            "feature CSV must start with columns g,n,d followed by at least one feature".into(),
        ));
    }
    let mut keys = Vec::new();
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |what: &str| Error::Parse(format!("row {}: bad {what}", line + 1));
        let g: u32 = field(0).parse().map_err(|_| bad("g"))?;
        let n: usize = field(1).parse().map_err(|_| bad("n"))?;
        let d = Partition::parse(field(2))?;
        if d.len() != n {
            return Err(Error::Parse(format!("row {}: n = {n} but partition has {} parts", line + 1, d.len())));
        }
        let feats = (3..rec.len())
            .map(|i| field(i).parse::<f64>().map_err(|_| bad("feature")))
            .collect::<Result<Vec<_>>>()?;
        keys.push(AmplitudeKey::new(g, d));
        rows.push(feats);
    }
    Ok((keys, FeatureMatrix::from_rows(&rows)?))
}
