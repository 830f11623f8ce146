//! Python bindings. Matrices cross the boundary as lists of rows and dates as
//! ISO `YYYY-MM-DD` strings, so the module needs nothing beyond the standard
//! library on the Python side.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use marketmode as mm;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

const DATE_FORMAT: &str = "%Y-%m-%d";

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn spectral_err(e: mm::SpectralError) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        value_err(e)
    }
}

fn sampler_err(e: mm::SamplerError) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        value_err(e)
    }
}

fn iso(dates: &[NaiveDate]) -> Vec<String> {
    dates.iter().map(|d| d.format(DATE_FORMAT).to_string()).collect()
}

fn rows(flat: &[f64], n: usize) -> Vec<Vec<f64>> {
    flat.chunks(n).map(<[f64]>::to_vec).collect()
}

fn flatten(m: &[Vec<f64>]) -> PyResult<(Vec<f64>, usize)> {
    let n = m.len();
    if m.iter().any(|r| r.len() != n) {
        return Err(value_err(format!("matrix is not square ({n} rows)")));
    }
    Ok((m.concat(), n))
}

fn loops(self_loops: bool) -> mm::SelfLoops {
    if self_loops {
        mm::SelfLoops::Keep
    } else {
        mm::SelfLoops::Drop
    }
}

/// Aligned log returns with a sector label per ticker.
#[pyclass(name = "ReturnPanel", module = "marketmode", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyReturnPanel {
    inner: mm::ReturnPanel,
}

#[pymethods]
impl PyReturnPanel {
    /// `returns[i][t]` is ticker `i` on `dates[t]`.
    #[new]
    fn new(
        tickers: Vec<String>,
        sectors: Vec<String>,
        dates: Vec<String>,
        returns: Vec<Vec<f64>>,
    ) -> PyResult<Self> {
        let dates = dates
            .iter()
            .map(|d| NaiveDate::parse_from_str(d, DATE_FORMAT).map_err(value_err))
            .collect::<PyResult<_>>()?;
        let inner = mm::ReturnPanel::from_returns(tickers, sectors, dates, returns)
            .map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Loads and cleans `prices.csv` and `sectors.csv`. Returns the panel and
    /// the `(ticker, reason)` pairs of dropped tickers.
    #[staticmethod]
    #[pyo3(signature = (prices, sectors, gap_limit = 5, drop_fraction = 0.1, strict = false))]
    fn load(
        prices: std::path::PathBuf,
        sectors: std::path::PathBuf,
        gap_limit: usize,
        drop_fraction: f64,
        strict: bool,
    ) -> PyResult<(Self, Vec<(String, String)>)> {
        let policy = mm::CleaningPolicy {
            gap_limit,
            drop_fraction,
            strict,
        };
        let (panel, removals) =
            mm::load_price_panel(&prices, &sectors, &policy).map_err(value_err)?;
        Ok((
            Self {
                inner: mm::log_returns(&panel),
            },
            removals.into_iter().map(|r| (r.ticker, r.reason)).collect(),
        ))
    }

    #[getter]
    fn tickers(&self) -> Vec<String> {
        self.inner.tickers().to_vec()
    }

    #[getter]
    fn sectors(&self) -> Vec<String> {
        self.inner.sectors().to_vec()
    }

    #[getter]
    fn dates(&self) -> Vec<String> {
        iso(self.inner.dates())
    }

    #[getter]
    fn returns(&self) -> Vec<Vec<f64>> {
        self.inner.returns().to_vec()
    }

    #[getter]
    fn n_tickers(&self) -> usize {
        self.inner.n_tickers()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "ReturnPanel({} tickers x {} observations)",
            self.inner.n_tickers(),
            self.inner.len()
        )
    }
}

/// Log returns of a seeded factor-model market with equal-sized sectors.
#[pyfunction]
#[pyo3(signature = (n_sectors = 9, per_sector = 10, t = 2000, beta_market = 0.4, beta_sector = 0.5, sigma_idio = 0.77, seed = 0))]
fn synth_factor_market(
    n_sectors: usize,
    per_sector: usize,
    t: usize,
    beta_market: f64,
    beta_sector: f64,
    sigma_idio: f64,
    seed: u64,
) -> PyResult<PyReturnPanel> {
    let cfg = mm::SynthConfig::uniform(
        n_sectors,
        per_sector,
        t,
        beta_market,
        beta_sector,
        sigma_idio,
        seed,
    );
    let prices = mm::generate_factor_market(&cfg).map_err(value_err)?;
    Ok(PyReturnPanel {
        inner: mm::log_returns(&prices),
    })
}

/// `kind` is `identical`, `independent` or `anti`.
#[pyfunction]
#[pyo3(signature = (kind, n, t, seed = 0))]
fn synth_degenerate_market(kind: &str, n: usize, t: usize, seed: u64) -> PyResult<PyReturnPanel> {
    let kind: mm::DegenerateKind = kind.parse().map_err(value_err)?;
    let prices = mm::generate_degenerate_market(kind, n, t, seed).map_err(value_err)?;
    Ok(PyReturnPanel {
        inner: mm::log_returns(&prices),
    })
}

/// Pearson correlation over the `tau` observations ending at the 1-based
/// `end_index`. `subset` defaults to every ticker.
#[pyfunction]
#[pyo3(signature = (panel, tau, end_index, subset = None))]
fn window_correlation(
    panel: &PyReturnPanel,
    tau: usize,
    end_index: usize,
    subset: Option<Vec<usize>>,
) -> PyResult<Vec<Vec<f64>>> {
    let subset = subset.unwrap_or_else(|| (0..panel.inner.n_tickers()).collect());
    let m = mm::window_correlation(&panel.inner, mm::WindowSpec::new(tau, end_index), &subset)
        .map_err(value_err)?;
    Ok(rows(m.entries(), m.dim()))
}

/// `(lambda1, v1, lambda1 / n)` of a symmetric matrix.
#[pyfunction]
fn leading_eigenpair(matrix: Vec<Vec<f64>>) -> PyResult<(f64, Vec<f64>, f64)> {
    let (flat, n) = flatten(&matrix)?;
    if n == 0 {
        return Err(value_err("empty matrix"));
    }
    let r = mm::spectral::leading_eigenpair_raw(&flat, n, &mm::EigenOptions::default())
        .map_err(spectral_err)?;
    Ok((r.lambda1, r.v1, r.normalized_lambda1))
}

/// Overlap of a vector with the all-ones direction, in `[0, 1]`.
#[pyfunction]
fn uniformity(v: Vec<f64>) -> f64 {
    mm::uniformity(&v)
}

/// Collectivity series for the whole market and every sector, keyed by scope.
#[pyfunction]
fn collectivity(
    py: Python<'_>,
    panel: &PyReturnPanel,
    tau: usize,
) -> PyResult<BTreeMap<String, BTreeMap<&'static str, Py<PyAny>>>> {
    let p = &panel.inner;
    let mut scopes = vec![mm::Scope::market(p)];
    scopes.extend(mm::Scope::sectors(p));
    let series = py
        .detach(|| mm::collectivity_series(p, tau, &scopes, &mm::EigenOptions::default()))
        .map_err(spectral_err)?;
    let mut out = BTreeMap::new();
    for s in series {
        let mut d = BTreeMap::new();
        d.insert("dates", iso(&s.dates).into_pyobject(py)?.into_any().unbind());
        d.insert("lambda1_norm", s.lambda1_norm.into_pyobject(py)?.into_any().unbind());
        d.insert("uniformity", s.uniformity.into_pyobject(py)?.into_any().unbind());
        out.insert(s.scope, d);
    }
    Ok(out)
}

/// Modularity of a weighted graph (`adjacency` symmetric, entries in
/// `[0, 1]`) under the partition `groups[i]` = group of vertex `i`.
#[pyfunction]
fn modularity(adjacency: Vec<Vec<f64>>, groups: Vec<usize>) -> PyResult<f64> {
    let (flat, n) = flatten(&adjacency)?;
    if groups.len() != n {
        return Err(value_err(format!("{} group labels for {n} vertices", groups.len())));
    }
    let labels: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    let g = mm::WeightedGraph::from_adjacency(labels.clone(), flat).map_err(value_err)?;
    let mut parts: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (l, k) in labels.into_iter().zip(groups) {
        parts.entry(k).or_default().push(l);
    }
    let p = mm::Partition::new(parts.into_values().collect()).map_err(value_err)?;
    mm::modularity(&g, &p).map_err(value_err)
}

/// `(dates, Q)` of the sector partition over every window.
#[pyfunction]
#[pyo3(signature = (panel, tau, self_loops = true))]
fn modularity_series(
    py: Python<'_>,
    panel: &PyReturnPanel,
    tau: usize,
    self_loops: bool,
) -> PyResult<(Vec<String>, Vec<f64>)> {
    let p = &panel.inner;
    let s = py
        .detach(|| {
            mm::modularity_series(p, tau, &mm::Partition::from_sectors(p), loops(self_loops))
        })
        .map_err(value_err)?;
    Ok((iso(&s.dates), s.q))
}

/// Mean and 5/95 percentiles of modularity under `draws` random partitions
/// with the sector size profile.
#[pyfunction]
#[pyo3(signature = (panel, tau, draws = 500, seed = 0, self_loops = true))]
fn random_partition_baseline(
    py: Python<'_>,
    panel: &PyReturnPanel,
    tau: usize,
    draws: usize,
    seed: u64,
    self_loops: bool,
) -> PyResult<BTreeMap<&'static str, Py<PyAny>>> {
    let p = &panel.inner;
    let sizes = mm::Partition::from_sectors(p).sizes();
    let b = py
        .detach(|| mm::random_partition_baseline(p, tau, &sizes, draws, seed, loops(self_loops)))
        .map_err(value_err)?;
    let mut out = BTreeMap::new();
    out.insert("dates", iso(&b.dates).into_pyobject(py)?.into_any().unbind());
    out.insert("mean", b.mean.into_pyobject(py)?.into_any().unbind());
    out.insert("p05", b.p05.into_pyobject(py)?.into_any().unbind());
    out.insert("p95", b.p95.into_pyobject(py)?.into_any().unbind());
    Ok(out)
}

/// Percentile curves of one `(m, n)` cell.
#[pyclass(name = "PercentileCurves", module = "marketmode", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyCurves {
    inner: mm::PercentileCurves,
}

#[pymethods]
impl PyCurves {
    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn dates(&self) -> Vec<String> {
        iso(&self.inner.dates)
    }

    #[getter]
    fn p05(&self) -> Vec<f64> {
        self.inner.p05.clone()
    }

    #[getter]
    fn p50(&self) -> Vec<f64> {
        self.inner.p50.clone()
    }

    #[getter]
    fn p95(&self) -> Vec<f64> {
        self.inner.p95.clone()
    }

    /// Temporal mean of the median curve.
    fn mu(&self) -> f64 {
        self.inner.mu()
    }

    /// Temporal mean of the 5 to 95 percentile spread.
    fn sigma(&self) -> f64 {
        self.inner.sigma()
    }

    fn __repr__(&self) -> String {
        format!("PercentileCurves(m={}, n={})", self.inner.m, self.inner.n)
    }
}

fn table_rows(t: &mm::GridTable) -> Vec<Vec<Option<f64>>> {
    t.m_values()
        .iter()
        .map(|&m| t.n_values().iter().map(|&n| t.get(m, n)).collect())
        .collect()
}

/// Output of [`sample_grid`].
#[pyclass(name = "SamplingResult", module = "marketmode", frozen)]
pub struct PySampling {
    inner: mm::SamplingResult,
}

#[pymethods]
impl PySampling {
    #[getter]
    fn m_values(&self) -> Vec<usize> {
        self.inner.summary.mu.m_values().to_vec()
    }

    #[getter]
    fn n_values(&self) -> Vec<usize> {
        self.inner.summary.mu.n_values().to_vec()
    }

    /// Rows follow `m_values`, columns `n_values`; skipped cells are `None`.
    #[getter]
    fn mu_table(&self) -> Vec<Vec<Option<f64>>> {
        table_rows(&self.inner.summary.mu)
    }

    #[getter]
    fn sigma_table(&self) -> Vec<Vec<Option<f64>>> {
        table_rows(&self.inner.summary.sigma)
    }

    /// `(m, n, reason)` for every infeasible cell.
    #[getter]
    fn skipped(&self) -> Vec<(usize, usize, String)> {
        self.inner
            .skipped
            .iter()
            .map(|s| (s.m, s.n, s.reason.clone()))
            .collect()
    }

    #[getter]
    fn curves(&self) -> Vec<PyCurves> {
        self.inner
            .curves
            .iter()
            .map(|c| PyCurves { inner: c.clone() })
            .collect()
    }

    fn curve(&self, m: usize, n: usize) -> Option<PyCurves> {
        self.inner.curve(m, n).map(|c| PyCurves { inner: c.clone() })
    }

    /// Greedy path from the first to the last cell of the grid.
    fn greedy_path(&self) -> PyResult<Vec<(usize, usize)>> {
        let t = &self.inner.summary.mu;
        let (m, n) = (t.m_values(), t.n_values());
        mm::greedy_path(t, (m[0], n[0]), (*m.last().unwrap(), *n.last().unwrap()))
            .map_err(sampler_err)
    }
}

/// Samples `draws` portfolios per `(m, n)` cell; ranges are inclusive.
#[pyfunction]
#[pyo3(signature = (panel, tau = 120, m_range = (2, 10), n_range = (2, 9), draws = 500, seed = 0))]
fn sample_grid(
    py: Python<'_>,
    panel: &PyReturnPanel,
    tau: usize,
    m_range: (usize, usize),
    n_range: (usize, usize),
    draws: usize,
    seed: u64,
) -> PyResult<PySampling> {
    let cfg = mm::GridConfig {
        m_range: m_range.0..=m_range.1,
        n_range: n_range.0..=n_range.1,
        draws,
        master_seed: seed,
    };
    let p = &panel.inner;
    let inner = py
        .detach(|| mm::sample_grid(p, tau, &cfg, &mm::EigenOptions::default()))
        .map_err(sampler_err)?;
    Ok(PySampling { inner })
}

/// Greedy walk through a mean table given as rows, where `rows[0][0]` is
/// cell `(m_start, n_start)`.
#[pyfunction]
#[pyo3(signature = (rows, m_start = 2, n_start = 2, start = None, end = None))]
fn greedy_path(
    rows: Vec<Vec<f64>>,
    m_start: usize,
    n_start: usize,
    start: Option<(usize, usize)>,
    end: Option<(usize, usize)>,
) -> PyResult<Vec<(usize, usize)>> {
    let t = mm::GridTable::from_rows(m_start, n_start, &rows).map_err(value_err)?;
    let (m, n) = (t.m_values(), t.n_values());
    let start = start.unwrap_or((m[0], n[0]));
    let end = end.unwrap_or((*m.last().unwrap(), *n.last().unwrap()));
    mm::greedy_path(&t, start, end).map_err(sampler_err)
}

/// Average-linkage merge tree.
#[pyclass(name = "Dendrogram", module = "marketmode", frozen)]
pub struct PyDendrogram {
    inner: mm::Dendrogram,
}

#[pymethods]
impl PyDendrogram {
    /// `(child_a, child_b, height, size)`; leaves are `0..n_items`, the node
    /// built at step `s` is `n_items + s`.
    #[getter]
    fn merges(&self) -> Vec<(usize, usize, f64, usize)> {
        self.inner
            .merges
            .iter()
            .map(|m| (m.a, m.b, m.height, m.size))
            .collect()
    }

    #[getter]
    fn n_items(&self) -> usize {
        self.inner.n_items
    }

    /// Flat labels for `k` clusters, numbered by first appearance.
    fn cut(&self, k: usize) -> PyResult<Vec<usize>> {
        mm::cut_clusters(&self.inner, k).map_err(value_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }
}

/// Clusters a symmetric distance matrix.
#[pyfunction]
fn average_linkage(distances: Vec<Vec<f64>>) -> PyResult<PyDendrogram> {
    let (flat, n) = flatten(&distances)?;
    let dm = mm::DistanceMatrix::new(vec![(0, 0); n], flat).map_err(value_err)?;
    Ok(PyDendrogram {
        inner: mm::average_linkage(&dm),
    })
}

type CellDistances = (Vec<(usize, usize)>, Vec<Vec<f64>>);

/// Pairwise median-curve distances between the sampled cells, with the cell
/// order used for the rows.
#[pyfunction]
fn curve_distances(
    py: Python<'_>,
    result: &PySampling,
) -> PyResult<CellDistances> {
    let dm = py
        .detach(|| mm::distance_matrix(&result.inner.curves))
        .map_err(value_err)?;
    Ok((dm.items().to_vec(), rows(dm.entries(), dm.len())))
}

#[pymodule]
#[pyo3(name = "marketmode")]
fn marketmode_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DEFAULT_TAU", mm::DEFAULT_TAU)?;
    m.add("DEFAULT_DRAWS", mm::DEFAULT_DRAWS)?;
    m.add_class::<PyReturnPanel>()?;
    m.add_class::<PyCurves>()?;
    m.add_class::<PySampling>()?;
    m.add_class::<PyDendrogram>()?;
    m.add_function(wrap_pyfunction!(synth_factor_market, m)?)?;
    m.add_function(wrap_pyfunction!(synth_degenerate_market, m)?)?;
    m.add_function(wrap_pyfunction!(window_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(leading_eigenpair, m)?)?;
    m.add_function(wrap_pyfunction!(uniformity, m)?)?;
    m.add_function(wrap_pyfunction!(collectivity, m)?)?;
    m.add_function(wrap_pyfunction!(modularity, m)?)?;
    m.add_function(wrap_pyfunction!(modularity_series, m)?)?;
    m.add_function(wrap_pyfunction!(random_partition_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(sample_grid, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_path, m)?)?;
    m.add_function(wrap_pyfunction!(average_linkage, m)?)?;
    m.add_function(wrap_pyfunction!(curve_distances, m)?)?;
    Ok(())
}
