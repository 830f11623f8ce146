//! Windowed Pearson correlation matrices of log returns.
//!
//! A window ending at `end_index = t` covers the `tau` return observations
//! `t - tau + 1 ..= t` (1-based), i.e. `returns[t - tau .. t]` in slice terms.
//! Both the `1/tau` prefactor and the centring cancel in the ratio, so every
//! entry is the plain sample Pearson correlation.

use std::io::Write;

use thiserror::Error;

use crate::ingest::ReturnPanel;

/// Rolling sums are rebuilt from scratch this often to bound drift.
pub const REBUILD_EVERY: usize = 512;

/// Ratio of accumulated magnitude to window variance that forces a rebuild.
const CANCELLATION_LIMIT: f64 = 100.0;

/// A window is "constant" when its centred sum of squares is this small
/// relative to the raw sum of squares.
const ZERO_VARIANCE_REL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrError {
    #[error("ticker subset is empty")]
    EmptySubset,
    #[error("ticker index {0} is out of range")]
    UnknownTicker(usize),
    #[error("ticker index {0} appears twice in the subset")]
    DuplicateTicker(usize),
    #[error("window tau={tau} ending at {end_index} does not fit {len} returns (need 2 <= tau <= end_index <= len)")]
    OutOfRangeWindow {
        tau: usize,
        end_index: usize,
        len: usize,
    },
    #[error("{ticker} is constant in the window ending at t={end_index}")]
    ZeroVarianceWindow { ticker: String, end_index: usize },
    #[error("not a correlation matrix: {0}")]
    InvalidMatrix(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub tau: usize,
    /// 1-based index of the last return in the window.
    pub end_index: usize,
}

impl WindowSpec {
    pub fn new(tau: usize, end_index: usize) -> Self {
        Self { tau, end_index }
    }

    pub fn check(&self, len: usize) -> Result<(), CorrError> {
        if self.tau < 2 || self.end_index < self.tau || self.end_index > len {
            return Err(CorrError::OutOfRangeWindow {
                tau: self.tau,
                end_index: self.end_index,
                len,
            });
        }
        Ok(())
    }

    /// Slice range of the window inside a return series.
    pub fn range(&self) -> std::ops::Range<usize> {
        self.end_index - self.tau..self.end_index
    }
}

/// Symmetric correlation matrix of one window, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    labels: Vec<String>,
    end_index: usize,
    dim: usize,
    entries: Vec<f64>,
}

impl CorrMatrix {
    /// Wraps an arbitrary row-major matrix after checking unit diagonal,
    /// symmetry and range. Positive semi-definiteness is not checked.
    pub fn from_entries(
        labels: Vec<String>,
        end_index: usize,
        entries: Vec<f64>,
    ) -> Result<Self, CorrError> {
        let dim = labels.len();
        if dim == 0 {
            return Err(CorrError::EmptySubset);
        }
        if entries.len() != dim * dim {
            return Err(CorrError::InvalidMatrix(format!(
                "{} entries for a {dim}x{dim} matrix",
                entries.len()
            )));
        }
        for i in 0..dim {
            if (entries[i * dim + i] - 1.0).abs() > 1e-12 {
                return Err(CorrError::InvalidMatrix(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..dim {
                let v = entries[i * dim + j];
                if !v.is_finite() || v.abs() > 1.0 + 1e-12 {
                    return Err(CorrError::InvalidMatrix(format!("entry ({i},{j}) = {v}")));
                }
                if (v - entries[j * dim + i]).abs() > 1e-12 {
                    return Err(CorrError::InvalidMatrix(format!("asymmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self {
            labels,
            end_index,
            dim,
            entries,
        })
    }

    pub(crate) fn from_parts_unchecked(
        labels: Vec<String>,
        end_index: usize,
        entries: Vec<f64>,
    ) -> Self {
        let dim = labels.len();
        debug_assert_eq!(entries.len(), dim * dim);
        Self {
            labels,
            end_index,
            dim,
            entries,
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn end_index(&self) -> usize {
        self.end_index
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Writes the matrix with a label header row and a label column.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec![String::new()];
        header.extend(self.labels.iter().cloned());
        out.write_record(&header)?;
        for i in 0..self.dim {
            let mut row = vec![self.labels[i].clone()];
            row.extend((0..self.dim).map(|j| self.get(i, j).to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn validate_subset(panel: &ReturnPanel, subset: &[usize]) -> Result<(), CorrError> {
    if subset.is_empty() {
        return Err(CorrError::EmptySubset);
    }
    let mut seen = vec![false; panel.n_tickers()];
    for &i in subset {
        if i >= panel.n_tickers() {
            return Err(CorrError::UnknownTicker(i));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(CorrError::DuplicateTicker(i));
        }
    }
    Ok(())
}

fn labels_of(panel: &ReturnPanel, subset: &[usize]) -> Vec<String> {
    subset.iter().map(|&i| panel.tickers()[i].clone()).collect()
}

/// Pearson correlation of the `subset` series over one window, computed with
/// a two-pass (mean, then centred products) scheme.
pub fn window_correlation(
    panel: &ReturnPanel,
    spec: WindowSpec,
    subset: &[usize],
) -> Result<CorrMatrix, CorrError> {
    validate_subset(panel, subset)?;
    spec.check(panel.len())?;
    let range = spec.range();
    let tau = spec.tau as f64;
    let n = subset.len();

    let mut centred = Vec::with_capacity(n);
    let mut norms = Vec::with_capacity(n);
    for &i in subset {
        let w = &panel.returns()[i][range.clone()];
        let mean = w.iter().sum::<f64>() / tau;
        let c: Vec<f64> = w.iter().map(|x| x - mean).collect();
        let ss: f64 = c.iter().map(|x| x * x).sum();
        let raw: f64 = w.iter().map(|x| x * x).sum();
        if ss <= ZERO_VARIANCE_REL * raw {
            return Err(CorrError::ZeroVarianceWindow {
                ticker: panel.tickers()[i].clone(),
                end_index: spec.end_index,
            });
        }
        norms.push(ss.sqrt());
        centred.push(c);
    }

    let mut entries = vec![0.0; n * n];
    for a in 0..n {
        entries[a * n + a] = 1.0;
        for b in a + 1..n {
            let dot: f64 = centred[a]
                .iter()
                .zip(&centred[b])
                .map(|(x, y)| x * y)
                .sum();
            let v = (dot / (norms[a] * norms[b])).clamp(-1.0, 1.0);
            entries[a * n + b] = v;
            entries[b * n + a] = v;
        }
    }
    Ok(CorrMatrix::from_parts_unchecked(
        labels_of(panel, subset),
        spec.end_index,
        entries,
    ))
}

/// Streams the correlation matrices of every window `t = tau ..= T` for a
/// fixed ticker subset, updating shifted rolling sums in `O(n^2)` per step.
///
/// The shift for each series is its window mean at the last rebuild, which
/// keeps the `sum(x^2) - sum(x)^2 / tau` cancellation small.
pub struct RollingCorrelation<'a> {
    panel: &'a ReturnPanel,
    subset: Vec<usize>,
    tau: usize,
    next_end: usize,
    since_rebuild: usize,
    shift: Vec<f64>,
    sums: Vec<f64>,
    cross: Vec<f64>,
    /// Largest squared shifted value seen per series since the last rebuild.
    peak: Vec<f64>,
    buf: Vec<f64>,
    out_row: Vec<f64>,
    in_row: Vec<f64>,
    failed: bool,
}

impl<'a> RollingCorrelation<'a> {
    pub fn new(panel: &'a ReturnPanel, tau: usize, subset: &[usize]) -> Result<Self, CorrError> {
        validate_subset(panel, subset)?;
        WindowSpec::new(tau, tau).check(panel.len())?;
        let n = subset.len();
        Ok(Self {
            panel,
            subset: subset.to_vec(),
            tau,
            next_end: tau,
            since_rebuild: 0,
            shift: vec![0.0; n],
            sums: vec![0.0; n],
            cross: vec![0.0; n * n],
            peak: vec![0.0; n],
            buf: vec![0.0; n * n],
            out_row: vec![0.0; n],
            in_row: vec![0.0; n],
            failed: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.subset.len()
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    /// Number of windows still to be produced.
    pub fn remaining(&self) -> usize {
        if self.failed {
            0
        } else {
            (self.panel.len() + 1).saturating_sub(self.next_end)
        }
    }

    fn series(&self, a: usize) -> &'a [f64] {
        &self.panel.returns()[self.subset[a]]
    }

    #[allow(clippy::needless_range_loop)]
    fn rebuild(&mut self, end: usize) {
        let n = self.dim();
        let range = end - self.tau..end;
        for a in 0..n {
            let w = &self.series(a)[range.clone()];
            self.shift[a] = w.iter().sum::<f64>() / self.tau as f64;
        }
        self.sums.iter_mut().for_each(|x| *x = 0.0);
        self.cross.iter_mut().for_each(|x| *x = 0.0);
        self.peak.iter_mut().for_each(|x| *x = 0.0);
        let mut row = vec![0.0; n];
        for k in range {
            for a in 0..n {
                row[a] = self.series(a)[k] - self.shift[a];
                self.sums[a] += row[a];
                self.peak[a] = self.peak[a].max(row[a] * row[a]);
            }
            for a in 0..n {
                let ra = row[a];
                let base = a * n;
                for b in a..n {
                    self.cross[base + b] += ra * row[b];
                }
            }
        }
        self.since_rebuild = 0;
    }

    fn slide(&mut self, end: usize) {
        let n = self.dim();
        let old = end - self.tau - 1;
        let new = end - 1;
        for a in 0..n {
            let s = self.series(a);
            self.out_row[a] = s[old] - self.shift[a];
            self.in_row[a] = s[new] - self.shift[a];
            self.sums[a] += self.in_row[a] - self.out_row[a];
            self.peak[a] = self.peak[a].max(self.in_row[a] * self.in_row[a]);
        }
        for a in 0..n {
            let (oa, ia) = (self.out_row[a], self.in_row[a]);
            let base = a * n;
            let cross = &mut self.cross[base + a..base + n];
            let ins = &self.in_row[a..];
            let outs = &self.out_row[a..];
            for ((c, i), o) in cross.iter_mut().zip(ins).zip(outs) {
                *c += ia * i - oa * o;
            }
        }
        self.since_rebuild += 1;
    }

    /// True when some window variance is small next to the magnitudes that
    /// passed through its running sums, so cancellation may have eaten digits.
    fn lost_precision(&self) -> bool {
        let n = self.dim();
        let tau = self.tau as f64;
        (0..n).any(|a| {
            let c = self.cross[a * n + a];
            let var = c - self.sums[a] * self.sums[a] / tau;
            c.max(self.peak[a]) > CANCELLATION_LIMIT * var
        })
    }

    /// Advances one window and exposes its row-major entries without
    /// allocating. Returns the window's `end_index` alongside.
    pub fn advance(&mut self) -> Option<Result<(usize, &[f64]), CorrError>> {
        if self.failed || self.next_end > self.panel.len() {
            return None;
        }
        let end = self.next_end;
        self.next_end += 1;
        if end == self.tau || self.since_rebuild + 1 >= REBUILD_EVERY {
            self.rebuild(end);
        } else {
            self.slide(end);
            if self.lost_precision() {
                self.rebuild(end);
            }
        }

        let n = self.dim();
        let tau = self.tau as f64;
        for a in 0..n {
            let c = self.cross[a * n + a];
            let var = c - self.sums[a] * self.sums[a] / tau;
            // un-shifted sum of squares, matching the per-window test
            let shift = self.shift[a];
            let raw = c + shift * (2.0 * self.sums[a] + tau * shift);
            if var <= ZERO_VARIANCE_REL * raw.max(c) {
                self.failed = true;
                return Some(Err(CorrError::ZeroVarianceWindow {
                    ticker: self.panel.tickers()[self.subset[a]].clone(),
                    end_index: end,
                }));
            }
            // Diagonal slot temporarily holds the standard deviation.
            self.buf[a * n + a] = var.sqrt();
        }
        for a in 0..n {
            let sa = self.buf[a * n + a];
            for b in a + 1..n {
                let cov = self.cross[a * n + b] - self.sums[a] * self.sums[b] / tau;
                let v = (cov / (sa * self.buf[b * n + b])).clamp(-1.0, 1.0);
                self.buf[a * n + b] = v;
            }
        }
        for a in 0..n {
            self.buf[a * n + a] = 1.0;
            for b in a + 1..n {
                self.buf[b * n + a] = self.buf[a * n + b];
            }
        }
        Some(Ok((end, &self.buf)))
    }
}

impl Iterator for RollingCorrelation<'_> {
    type Item = Result<CorrMatrix, CorrError>;

    fn next(&mut self) -> Option<Self::Item> {
        let labels = labels_of(self.panel, &self.subset);
        self.advance().map(|r| {
            r.map(|(end, entries)| CorrMatrix::from_parts_unchecked(labels, end, entries.to_vec()))
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let r = self.remaining();
        (r, Some(r))
    }
}

/// Every window's correlation matrix for `t = tau ..= T`, in order.
pub fn correlation_series<'a>(
    panel: &'a ReturnPanel,
    tau: usize,
    subset: &[usize],
) -> Result<RollingCorrelation<'a>, CorrError> {
    RollingCorrelation::new(panel, tau, subset)
}
