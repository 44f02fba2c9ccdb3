//! Python bindings. Exact values cross the boundary as `fractions.Fraction`.

use std::path::PathBuf;

use num_rational::BigRational;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use airygeom::analysis::{cosine_matrix, tm_loss as core_tm_loss, FeatureMatrix};
use airygeom::asymptotics::{fit_subleading as core_fit, leading_asymptotic_log as core_leading, GrowthHypothesis, RatioSeries};
use airygeom::conformal::{calibrate_intervals as core_calibrate, PredictionSample, DEFAULT_WINDOW};
use airygeom::dataset::{build_records, BuildConfig};
use airygeom::dra::{activation_eval as core_activation, recursive_sequence as core_sequence, train_and_eval as core_train, ActivationKind, ActivationParams, NetConfig};
use airygeom::recursion::{amplitude_table as core_table, dilaton_residual as core_dilaton, intersection_number_with, AmplitudeCache};
use airygeom::{Error, Partition};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn fraction<'py>(py: Python<'py>, q: &BigRational) -> PyResult<Bound<'py, PyAny>> {
    py.import("fractions")?.getattr("Fraction")?.call1((q.numer().clone(), q.denom().clone()))
}

fn partition(d: Vec<u32>) -> PyResult<Partition> {
    if d.is_empty() {
        return Err(PyValueError::new_err("partition must have at least one part"));
    }
    Ok(Partition::new(d))
}

/// Memo table shared across calls; persists to JSON lines.
#[pyclass(name = "AmplitudeCache")]
struct PyCache(AmplitudeCache);

#[pymethods]
impl PyCache {
    #[new]
    fn new() -> Self {
        PyCache(AmplitudeCache::new())
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save_jsonl(&path).map_err(to_py)
    }

    fn load(&self, path: PathBuf) -> PyResult<usize> {
        self.0.load_jsonl(&path).map_err(to_py)
    }

    /// `(entries, hits, misses)`.
    fn stats(&self) -> (usize, u64, u64) {
        let s = self.0.stats();
        (s.entries, s.hits, s.misses)
    }
}

fn with_cache<R>(cache: Option<&PyCache>, f: impl FnOnce(&AmplitudeCache) -> R) -> R {
    match cache {
        Some(c) => f(&c.0),
        None => f(airygeom::recursion::global_cache()),
    }
}

/// `⟨τ_{d1} ⋯ τ_{dn}⟩_g` as a `Fraction`.
#[pyfunction]
#[pyo3(signature = (g, d, cache=None))]
fn intersection_number<'py>(py: Python<'py>, g: u32, d: Vec<u32>, cache: Option<&PyCache>) -> PyResult<Bound<'py, PyAny>> {
    let d = partition(d)?;
    let v = py.detach(|| with_cache(cache, |c| intersection_number_with(g, &d, c)));
    fraction(py, &v)
}

/// `[(partition, Fraction), ...]` for every in-dimension partition of length `n`.
#[pyfunction]
#[pyo3(signature = (g, n, cache=None))]
fn amplitude_table<'py>(py: Python<'py>, g: u32, n: u32, cache: Option<&PyCache>) -> PyResult<Vec<(Vec<u32>, Bound<'py, PyAny>)>> {
    let rows = py.detach(|| with_cache(cache, |c| core_table(g, n, c))).map_err(to_py)?;
    rows.iter().map(|(p, v)| Ok((p.parts().to_vec(), fraction(py, v)?))).collect()
}

#[pyfunction]
#[pyo3(signature = (g, d, cache=None))]
fn dilaton_residual<'py>(py: Python<'py>, g: u32, d: Vec<u32>, cache: Option<&PyCache>) -> PyResult<Bound<'py, PyAny>> {
    let d = partition(d)?;
    let v = py.detach(|| with_cache(cache, |c| core_dilaton(g, &d, c))).map_err(to_py)?;
    fraction(py, &v)
}

#[pyfunction]
fn leading_asymptotic_log(g: u32, d: Vec<u32>, growth: f64) -> PyResult<f64> {
    core_leading(g, &partition(d)?, growth).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (g, d, cache=None))]
fn normalized_ratio(py: Python<'_>, g: u32, d: Vec<u32>, cache: Option<&PyCache>) -> PyResult<f64> {
    let d = partition(d)?;
    py.detach(|| with_cache(cache, |c| airygeom::asymptotics::normalized_ratio(g, &d, c))).map_err(to_py)
}

/// Fits `R - 1` on powers of `1/(2g-3+n)`; returns a dict with `alpha1`,
/// `coefficients`, `rss` and `points`.
#[pyfunction]
#[pyo3(signature = (n, g_min, g_max, order, cache=None))]
fn fit_subleading<'py>(
    py: Python<'py>,
    n: u32,
    g_min: u32,
    g_max: u32,
    order: usize,
    cache: Option<&PyCache>,
) -> PyResult<Bound<'py, PyDict>> {
    let fit = py
        .detach(|| with_cache(cache, |c| RatioSeries::build(n, g_min, g_max, c).and_then(|s| core_fit(&s, order))))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("alpha1", fit.alpha1())?;
    out.set_item("coefficients", fit.series_coefficients)?;
    out.set_item("rss", fit.residual_sum_of_squares)?;
    out.set_item("points", fit.points)?;
    Ok(out)
}

/// The 90 `(numerator, denominator)` growth-constant candidates.
#[pyfunction]
fn growth_grid() -> Vec<(u32, u32)> {
    GrowthHypothesis::grid().into_iter().map(|h| (h.numerator, h.denominator)).collect()
}

#[pyfunction]
#[pyo3(signature = (predictions, truths, groups, alpha=0.1, window=DEFAULT_WINDOW, covariates=None))]
fn calibrate_intervals<'py>(
    py: Python<'py>,
    predictions: Vec<f64>,
    truths: Vec<f64>,
    groups: Vec<u32>,
    alpha: f64,
    window: usize,
    covariates: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    if truths.len() != predictions.len() || groups.len() != predictions.len() || covariates.as_ref().is_some_and(|c| c.len() != predictions.len()) {
        return Err(PyValueError::new_err("inputs must have equal lengths"));
    }
    let samples: Vec<PredictionSample> = (0..predictions.len())
        .map(|i| {
            let mut s = PredictionSample::new(predictions[i], truths[i], groups[i]);
            if let Some(c) = &covariates {
                s.covariate = c[i];
            }
            s
        })
        .collect();
    let r = core_calibrate(&samples, alpha, window).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("coverage", r.coverage)?;
    out.set_item("mean_width", r.mean_width)?;
    out.set_item("half_widths", r.half_widths)?;
    Ok(out)
}

/// `(value, d/dx, d/da, d/db, d/dc, d/dd)`.
#[pyfunction]
#[pyo3(signature = (kind, x, a=0.1, b=1.0, c=0.1, d=0.1))]
fn activation_eval(kind: &str, x: f64, a: f64, b: f64, c: f64, d: f64) -> PyResult<(f64, f64, f64, f64, f64, f64)> {
    let kind: ActivationKind = kind.parse().map_err(to_py)?;
    let e = core_activation(kind, &ActivationParams { a, b, c, d }, x);
    Ok((e.value, e.dx, e.da, e.db, e.dc, e.dd))
}

#[pyfunction]
fn recursive_sequence(n_max: u64) -> Vec<u64> {
    core_sequence(n_max)
}

/// Trains the 64/32 network on the recursive sequence; returns train/test R².
#[pyfunction]
#[pyo3(signature = (activation, seed=0, steps=None, learning_rate=None, train=(0, 120), test=(121, 200)))]
fn train_and_eval<'py>(
    py: Python<'py>,
    activation: &str,
    seed: u64,
    steps: Option<usize>,
    learning_rate: Option<f64>,
    train: (u64, u64),
    test: (u64, u64),
) -> PyResult<Bound<'py, PyDict>> {
    let kind: ActivationKind = activation.parse().map_err(to_py)?;
    let mut cfg = NetConfig::mlp_64_32(kind, seed);
    if let Some(s) = steps {
        cfg.steps = s;
    }
    if let Some(lr) = learning_rate {
        cfg.learning_rate = lr;
    }
    let r = py.detach(|| core_train(&cfg, train.0..=train.1, test.0..=test.1)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("train_r2", r.train_r2)?;
    out.set_item("test_r2", r.test_r2)?;
    out.set_item("final_loss", r.final_loss)?;
    out.set_item("diverged", r.diverged)?;
    Ok(out)
}

/// Writes a dataset directory and returns the number of records.
#[pyfunction]
#[pyo3(signature = (g_min, g_max, dim_max, out, n_min=1, n_max=4))]
fn build_dataset(py: Python<'_>, g_min: u32, g_max: u32, dim_max: u32, out: PathBuf, n_min: u32, n_max: u32) -> PyResult<usize> {
    let config = BuildConfig::new(g_min, g_max, dim_max).with_n_range(n_min, n_max);
    py.detach(|| {
        let ds = build_records(&config, &AmplitudeCache::new())?;
        ds.write_dir(&out)?;
        Ok(ds.records.len())
    })
    .map_err(to_py)
}

fn features(rows: Vec<Vec<f64>>) -> PyResult<FeatureMatrix> {
    FeatureMatrix::from_rows(&rows).map_err(to_py)
}

#[pyfunction]
fn cosine_similarity(rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let m = cosine_matrix(&features(rows)?).map_err(to_py)?;
    Ok(m.row_iter().map(|r| r.iter().copied().collect()).collect())
}

#[pyfunction]
fn tm_loss(z_b: Vec<Vec<f64>>, z_d: Vec<Vec<f64>>, lam: f64) -> PyResult<f64> {
    core_tm_loss(&features(z_b)?, &features(z_d)?, lam).map_err(to_py)
}

#[pymodule]
fn airygeom_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCache>()?;
    m.add_function(wrap_pyfunction!(intersection_number, m)?)?;
    m.add_function(wrap_pyfunction!(amplitude_table, m)?)?;
    m.add_function(wrap_pyfunction!(dilaton_residual, m)?)?;
    m.add_function(wrap_pyfunction!(leading_asymptotic_log, m)?)?;
    m.add_function(wrap_pyfunction!(normalized_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(fit_subleading, m)?)?;
    m.add_function(wrap_pyfunction!(growth_grid, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_intervals, m)?)?;
    m.add_function(wrap_pyfunction!(activation_eval, m)?)?;
    m.add_function(wrap_pyfunction!(recursive_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(train_and_eval, m)?)?;
    m.add_function(wrap_pyfunction!(build_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(tm_loss, m)?)?;
    m.add("GROWTH_CONSTANT", airygeom::asymptotics::GROWTH_CONSTANT)?;
    Ok(())
}
