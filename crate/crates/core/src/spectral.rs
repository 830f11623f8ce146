//! Leading eigenpair of correlation matrices and the collectivity series
//! built from it.
//!
//! Power iteration starts from (a slightly perturbed) `1/sqrt(n)`, which sits
//! close to the market mode of a typical correlation matrix. When it fails to
//! converge, or lands on an eigenvalue below the mean eigenvalue (which a
//! leading eigenvalue can never be), the dense symmetric solver takes over.

use std::io::Write;

use chrono::NaiveDate;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corr::{CorrError, CorrMatrix, RollingCorrelation};
use crate::ingest::ReturnPanel;

/// Relative spectral gap below which a leading eigenspace counts as degenerate.
pub const DEGENERATE_GAP: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("dense eigensolver failed on a {0}x{0} matrix")]
    DenseFailed(usize),
    #[error("scope {0:?} has no members")]
    EmptyScope(String),
    #[error("scope {scope:?}: {source}")]
    Corr {
        scope: String,
        #[source]
        source: CorrError,
    },
    #[error("scope {scope:?}, window t={end_index}: {source}")]
    Window {
        scope: String,
        end_index: usize,
        #[source]
        source: Box<SpectralError>,
    },
}

impl SpectralError {
    /// True for failures of the eigensolvers themselves, as opposed to bad data.
    pub fn is_numerical(&self) -> bool {
        match self {
            Self::NoConvergence { .. } | Self::DenseFailed(_) => true,
            Self::Window { source, .. } => source.is_numerical(),
            Self::EmptyScope(_) | Self::Corr { .. } => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Relative residual tolerance, `|A v - lambda v| <= tol * lambda`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Power,
    Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    pub lambda1: f64,
    /// Unit norm, with `sum(v1) >= 0` (first non-zero entry positive when the
    /// sum vanishes).
    pub v1: Vec<f64>,
    pub normalized_lambda1: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Estimate of `lambda1 - lambda2`. Exact for the dense solver; for power
    /// iteration it is read off the residual contraction rate.
    pub gap_estimate: f64,
    pub solver: Solver,
}

impl EigenResult {
    /// Leading eigenspace looks degenerate; `v1` (and thus uniformity) is then
    /// an arbitrary member of it.
    pub fn is_degenerate(&self) -> bool {
        self.gap_estimate <= DEGENERATE_GAP * self.lambda1.max(1.0)
    }
}

fn matvec(a: &[f64], n: usize, v: &[f64], out: &mut [f64]) {
    for (row, o) in a.chunks_exact(n).zip(out.iter_mut()) {
        *o = row.iter().zip(v).map(|(x, y)| x * y).sum();
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn apply_sign_convention(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    let flip = if s.abs() > 1e-12 {
        s < 0.0
    } else {
        v.iter()
            .find(|x| x.abs() > 1e-12)
            .is_some_and(|&x| x < 0.0)
    };
    if flip {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// `1 / sqrt(n)` in every entry: close to the market mode, and equivariant
/// under ticker permutations.
fn start_vector(n: usize) -> Vec<f64> {
    vec![1.0 / (n as f64).sqrt(); n]
}

fn mean_diagonal(a: &[f64], n: usize) -> f64 {
    (0..n).map(|i| a[i * n + i]).sum::<f64>() / n as f64
}

/// Power iteration on a row-major symmetric positive semi-definite matrix.
pub fn power_iteration(
    a: &[f64],
    n: usize,
    opts: &EigenOptions,
) -> Result<EigenResult, SpectralError> {
    assert_eq!(a.len(), n * n, "matrix is not {n}x{n}");
    let floor = mean_diagonal(a, n);
    let mut v = start_vector(n);
    let mut w = vec![0.0; n];
    let mut prev_residual = f64::NAN;
    let mut ratio: f64 = 0.0;
    let mut residual = f64::INFINITY;

    for it in 1..=opts.max_iter {
        matvec(a, n, &v, &mut w);
        let lambda: f64 = v.iter().zip(&w).map(|(x, y)| x * y).sum();
        residual = v
            .iter()
            .zip(&w)
            .map(|(x, y)| (y - lambda * x).powi(2))
            .sum::<f64>()
            .sqrt();
        if lambda > 0.0 && residual <= opts.tol * lambda {
            // Below the mean eigenvalue: a non-leading eigenvector. On the first
            // iteration: the jittered start is itself an eigenvector, which
            // only happens for (near) scalar blocks, so leave the gap to the
            // dense solver.
            if it == 1 || lambda < floor - 1e-9 * floor.abs().max(1.0) {
                return Err(SpectralError::NoConvergence {
                    iterations: it,
                    residual,
                });
            }
            apply_sign_convention(&mut v);
            return Ok(EigenResult {
                lambda1: lambda,
                normalized_lambda1: lambda / n as f64,
                v1: v,
                iterations: it,
                residual,
                gap_estimate: lambda * (1.0 - ratio.clamp(0.0, 1.0)),
                solver: Solver::Power,
            });
        }
        if prev_residual.is_finite() && prev_residual > 0.0 {
            ratio = residual / prev_residual;
        }
        prev_residual = residual;
        let nw = norm(&w);
        if !(nw > 0.0 && nw.is_finite()) {
            // Start vector fell into the null space.
            return Err(SpectralError::NoConvergence {
                iterations: it,
                residual,
            });
        }
        v.iter_mut().zip(&w).for_each(|(x, y)| *x = y / nw);
    }
    Err(SpectralError::NoConvergence {
        iterations: opts.max_iter,
        residual,
    })
}

/// Full symmetric eigendecomposition, returning the top pair.
pub fn dense_leading(a: &[f64], n: usize) -> Result<EigenResult, SpectralError> {
    assert_eq!(a.len(), n * n, "matrix is not {n}x{n}");
    let m = DMatrix::from_row_slice(n, n, a);
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 1_000_000)
        .ok_or(SpectralError::DenseFailed(n))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let lambda = eig.eigenvalues[order[0]];
    let gap = if n > 1 {
        lambda - eig.eigenvalues[order[1]]
    } else {
        lambda
    };
    let mut v: Vec<f64> = eig.eigenvectors.column(order[0]).iter().copied().collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    apply_sign_convention(&mut v);
    let mut w = vec![0.0; n];
    matvec(a, n, &v, &mut w);
    let residual = v
        .iter()
        .zip(&w)
        .map(|(x, y)| (y - lambda * x).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(EigenResult {
        lambda1: lambda,
        normalized_lambda1: lambda / n as f64,
        v1: v,
        iterations: 0,
        residual,
        gap_estimate: gap,
        solver: Solver::Dense,
    })
}

/// Power iteration with dense fallback on a raw row-major matrix.
pub fn leading_eigenpair_raw(
    a: &[f64],
    n: usize,
    opts: &EigenOptions,
) -> Result<EigenResult, SpectralError> {
    if n == 1 {
        return Ok(EigenResult {
            lambda1: a[0],
            v1: vec![1.0],
            normalized_lambda1: a[0],
            iterations: 0,
            residual: 0.0,
            gap_estimate: a[0],
            solver: Solver::Power,
        });
    }
    match power_iteration(a, n, opts) {
        Ok(r) => Ok(r),
        Err(SpectralError::NoConvergence { .. }) => dense_leading(a, n),
        Err(e) => Err(e),
    }
}

/// Dominant eigenpair of a correlation matrix.
pub fn leading_eigenpair(
    m: &CorrMatrix,
    opts: &EigenOptions,
) -> Result<EigenResult, SpectralError> {
    leading_eigenpair_raw(m.entries(), m.dim(), opts)
}

/// `|<v, 1>| / (|v| |1|)` with the Euclidean norm `|1| = sqrt(n)`.
pub fn uniformity(v1: &[f64]) -> f64 {
    let nv = norm(v1);
    if v1.is_empty() || nv == 0.0 {
        return 0.0;
    }
    let s: f64 = v1.iter().sum();
    (s.abs() / (nv * (v1.len() as f64).sqrt())).min(1.0)
}

/// Named ticker subset over which a collectivity series is computed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scope {
    pub name: String,
    pub members: Vec<usize>,
}

impl Scope {
    pub fn new(name: impl Into<String>, members: Vec<usize>) -> Self {
        Self {
            name: name.into(),
            members,
        }
    }

    /// All tickers, named `market`.
    pub fn market(panel: &ReturnPanel) -> Self {
        Self::new("market", (0..panel.n_tickers()).collect())
    }

    /// One scope per sector, in lexicographic sector order.
    pub fn sectors(panel: &ReturnPanel) -> Vec<Self> {
        panel
            .sector_members()
            .into_iter()
            .map(|(name, members)| Self { name, members })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectivitySeries {
    pub scope: String,
    pub end_indices: Vec<usize>,
    pub dates: Vec<NaiveDate>,
    pub lambda1_norm: Vec<f64>,
    pub uniformity: Vec<f64>,
    /// Windows whose leading eigenspace looked degenerate; their uniformity
    /// value is not meaningful.
    pub degenerate: Vec<bool>,
}

impl CollectivitySeries {
    pub fn len(&self) -> usize {
        self.end_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.end_indices.is_empty()
    }

    /// `date,lambda1_norm,uniformity`
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["date", "lambda1_norm", "uniformity"])?;
        for k in 0..self.len() {
            out.write_record([
                self.dates[k].format(crate::ingest::DATE_FORMAT).to_string(),
                self.lambda1_norm[k].to_string(),
                self.uniformity[k].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Rolling leading-eigenpair diagnostics over one ticker subset: per window
/// `(end_index, lambda1 / n, uniformity, degenerate)`.
pub(crate) fn rolling_leading(
    panel: &ReturnPanel,
    tau: usize,
    members: &[usize],
    opts: &EigenOptions,
    scope: &str,
    mut on_window: impl FnMut(usize, &[f64]),
) -> Result<Vec<(usize, f64, f64, bool)>, SpectralError> {
    let corr_err = |source| SpectralError::Corr {
        scope: scope.to_string(),
        source,
    };
    let mut rolling = RollingCorrelation::new(panel, tau, members).map_err(corr_err)?;
    let n = members.len();
    let mut out = Vec::with_capacity(rolling.remaining());
    while let Some(step) = rolling.advance() {
        let (end, entries) = step.map_err(corr_err)?;
        on_window(end, entries);
        let eig = leading_eigenpair_raw(entries, n, opts).map_err(|e| SpectralError::Window {
            scope: scope.to_string(),
            end_index: end,
            source: Box::new(e),
        })?;
        out.push((
            end,
            eig.normalized_lambda1,
            uniformity(&eig.v1),
            n > 1 && eig.is_degenerate(),
        ));
    }
    Ok(out)
}

fn series_for_scope(
    panel: &ReturnPanel,
    tau: usize,
    scope: &Scope,
    opts: &EigenOptions,
) -> Result<CollectivitySeries, SpectralError> {
    if scope.members.is_empty() {
        return Err(SpectralError::EmptyScope(scope.name.clone()));
    }
    let rows = rolling_leading(panel, tau, &scope.members, opts, &scope.name, |_, _| {})?;
    Ok(CollectivitySeries {
        scope: scope.name.clone(),
        dates: rows.iter().map(|r| panel.dates()[r.0 - 1]).collect(),
        end_indices: rows.iter().map(|r| r.0).collect(),
        lambda1_norm: rows.iter().map(|r| r.1).collect(),
        uniformity: rows.iter().map(|r| r.2).collect(),
        degenerate: rows.iter().map(|r| r.3).collect(),
    })
}

/// Normalised leading eigenvalue and uniformity for each scope over
/// `t = tau ..= T`. Scopes are processed in parallel; output order follows
/// `scopes`.
pub fn collectivity_series(
    panel: &ReturnPanel,
    tau: usize,
    scopes: &[Scope],
    opts: &EigenOptions,
) -> Result<Vec<CollectivitySeries>, SpectralError> {
    scopes
        .par_iter()
        .map(|s| series_for_scope(panel, tau, s, opts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(n: usize, entries: Vec<f64>) -> CorrMatrix {
        CorrMatrix::from_entries((0..n).map(|i| format!("x{i}")).collect(), 0, entries).unwrap()
    }

    #[test]
    fn all_ones_rank_one() {
        let r = leading_eigenpair(&corr(3, vec![1.0; 9]), &EigenOptions::default()).unwrap();
        assert!((r.lambda1 - 3.0).abs() < 1e-12);
        assert!((r.normalized_lambda1 - 1.0).abs() < 1e-12);
        let e = 1.0 / 3f64.sqrt();
        for x in &r.v1 {
            assert!((x - e).abs() < 1e-10);
        }
        assert!((uniformity(&r.v1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn anti_correlated_pair() {
        let r = leading_eigenpair(&corr(2, vec![1.0, -1.0, -1.0, 1.0]), &EigenOptions::default())
            .unwrap();
        assert!((r.lambda1 - 2.0).abs() < 1e-12);
        assert!((r.normalized_lambda1 - 1.0).abs() < 1e-12);
        let e = 1.0 / 2f64.sqrt();
        assert!((r.v1[0] - e).abs() < 1e-10 && (r.v1[1] + e).abs() < 1e-10);
        assert!(uniformity(&r.v1).abs() < 1e-10);
    }

    #[test]
    fn start_vector_orthogonal_structure_still_finds_leading() {
        // 1 is an exact eigenvector here, but for the smaller eigenvalue 0.5.
        let r = leading_eigenpair(&corr(2, vec![1.0, -0.5, -0.5, 1.0]), &EigenOptions::default())
            .unwrap();
        assert!((r.lambda1 - 1.5).abs() < 1e-10);
    }

    #[test]
    fn uniformity_values() {
        assert!((uniformity(&[0.5, 0.5, 0.5, 0.5]) - 1.0).abs() < 1e-15);
        let e = 1.0 / 2f64.sqrt();
        assert!(uniformity(&[e, -e]).abs() < 1e-15);
        assert!((uniformity(&[1.0, 0.0, 0.0]) - 0.577_350_269_189_625_8).abs() < 1e-15);
        assert_eq!(uniformity(&[-0.5, -0.5, -0.5, -0.5]), uniformity(&[0.5; 4]));
    }

    #[test]
    fn single_ticker_matrix() {
        let r = leading_eigenpair(&corr(1, vec![1.0]), &EigenOptions::default()).unwrap();
        assert_eq!(r.lambda1, 1.0);
        assert_eq!(r.v1, vec![1.0]);
    }

    #[test]
    fn identity_is_degenerate() {
        let mut id = vec![0.0; 16];
        for i in 0..4 {
            id[i * 4 + i] = 1.0;
        }
        let r = leading_eigenpair(&corr(4, id), &EigenOptions::default()).unwrap();
        assert!((r.lambda1 - 1.0).abs() < 1e-12);
        assert!(r.is_degenerate());
    }

    #[test]
    fn non_convergence_falls_back_to_dense() {
        let m = corr(3, vec![1.0, 0.3, 0.2, 0.3, 1.0, 0.25, 0.2, 0.25, 1.0]);
        let tight = EigenOptions {
            tol: 1e-10,
            max_iter: 1,
        };
        let r = leading_eigenpair(&m, &tight).unwrap();
        assert_eq!(r.solver, Solver::Dense);
        let p = leading_eigenpair(&m, &EigenOptions::default()).unwrap();
        assert_eq!(p.solver, Solver::Power);
        assert!((r.lambda1 - p.lambda1).abs() < 1e-10);
    }
}
