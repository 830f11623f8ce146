//! Monte-Carlo sampling of `(m sectors, n equities per sector)` portfolios.
//!
//! For each grid cell, `D` portfolios are drawn, the normalised leading
//! eigenvalue of each is tracked over every rolling window, and the pointwise
//! 5/50/95 percentiles across draws give the cell's curves. The temporal mean
//! of the median curve is the cell's `mu`; the temporal mean of the 5-95 band
//! width is its `sigma`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::ops::RangeInclusive;

use chrono::NaiveDate;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{ReturnPanel, DATE_FORMAT};
use crate::seed::rng_for;
use crate::spectral::{rolling_leading, EigenOptions, SpectralError};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("need {m} sectors with enough tickers, only {eligible} qualify")]
    InsufficientSectors { m: usize, eligible: usize },
    #[error("sector {sector:?} has fewer than {n} tickers")]
    InsufficientEquities { sector: String, n: usize },
    #[error("percentile of an empty sample")]
    EmptyInput,
    #[error("probability {0} is outside [0, 1]")]
    BadProbability(f64),
    #[error("grid table has no value at ({m},{n})")]
    IncompleteTable { m: usize, n: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("ticker {0:?} is not in the panel")]
    UnknownTicker(String),
    #[error("malformed table: {0}")]
    BadTable(String),
    #[error("cell ({m},{n}), draw {draw}: {source}")]
    Cell {
        m: usize,
        n: usize,
        draw: usize,
        #[source]
        source: SpectralError,
    },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SamplerError {
    pub fn is_numerical(&self) -> bool {
        match self {
            Self::Cell { source, .. } | Self::Spectral(source) => source.is_numerical(),
            _ => false,
        }
    }
}

/// Sector name to its tickers, sectors in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SectorMap {
    sectors: BTreeMap<String, Vec<String>>,
}

impl SectorMap {
    pub fn new(sectors: BTreeMap<String, Vec<String>>) -> Self {
        Self { sectors }
    }

    /// Tickers keep their panel order within each sector.
    pub fn from_panel(panel: &ReturnPanel) -> Self {
        let sectors = panel
            .sector_members()
            .into_iter()
            .map(|(s, idx)| (s, idx.into_iter().map(|i| panel.tickers()[i].clone()).collect()))
            .collect();
        Self { sectors }
    }

    pub fn sectors(&self) -> &BTreeMap<String, Vec<String>> {
        &self.sectors
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.sectors.values().map(Vec::len).collect()
    }

    /// Sectors holding at least `n` tickers.
    pub fn eligible(&self, n: usize) -> Vec<&str> {
        self.sectors
            .iter()
            .filter(|(_, t)| t.len() >= n)
            .map(|(s, _)| s.as_str())
            .collect()
    }
}

/// Everything a portfolio draw depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedLineage {
    pub master_seed: u64,
    pub m: usize,
    pub n: usize,
    pub draw_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortfolioSpec {
    pub m: usize,
    pub n: usize,
    /// Sector to its `n` chosen tickers, in draw order.
    pub chosen: BTreeMap<String, Vec<String>>,
    pub draw_index: usize,
    pub lineage: SeedLineage,
}

impl PortfolioSpec {
    /// All `m * n` tickers, sector by sector.
    pub fn tickers(&self) -> impl Iterator<Item = &str> {
        self.chosen.values().flatten().map(String::as_str)
    }
}

fn check_feasible(m: usize, n: usize, map: &SectorMap) -> Result<(), SamplerError> {
    if m == 0 || n == 0 {
        return Err(SamplerError::InvalidConfig(format!("portfolio shape ({m},{n})")));
    }
    let eligible = map.eligible(n).len();
    if eligible >= m {
        return Ok(());
    }
    if map.sectors.len() >= m {
        let short = map
            .sectors
            .iter()
            .find(|(_, t)| t.len() < n)
            .map(|(s, _)| s.clone())
            .unwrap_or_default();
        return Err(SamplerError::InsufficientEquities { sector: short, n });
    }
    Err(SamplerError::InsufficientSectors { m, eligible })
}

/// Draws `m` eligible sectors, then `n` tickers in each, uniformly without
/// replacement. The result depends on nothing but the arguments.
pub fn draw_portfolio(
    m: usize,
    n: usize,
    map: &SectorMap,
    lineage: SeedLineage,
) -> Result<PortfolioSpec, SamplerError> {
    check_feasible(m, n, map)?;
    let eligible: Vec<(&String, &Vec<String>)> =
        map.sectors.iter().filter(|(_, t)| t.len() >= n).collect();
    let mut rng = rng_for(
        lineage.master_seed,
        &[m as u64, n as u64, lineage.draw_index as u64],
    );
    let mut chosen = BTreeMap::new();
    for s in index::sample(&mut rng, eligible.len(), m) {
        let (name, tickers) = eligible[s];
        let picks = index::sample(&mut rng, tickers.len(), n)
            .into_iter()
            .map(|i| tickers[i].clone())
            .collect();
        chosen.insert(name.clone(), picks);
    }
    Ok(PortfolioSpec {
        m,
        n,
        chosen,
        draw_index: lineage.draw_index,
        lineage,
    })
}

/// `lambda1 / (mn)` of the portfolio's correlation matrix for every window
/// `t = tau ..= T`. Tickers are taken in panel order, so the series matches
/// the collectivity series of the same subset bit for bit.
pub fn portfolio_lambda_series(
    spec: &PortfolioSpec,
    panel: &ReturnPanel,
    tau: usize,
    opts: &EigenOptions,
) -> Result<Vec<f64>, SamplerError> {
    let mut members = spec
        .tickers()
        .map(|t| {
            panel
                .index_of(t)
                .ok_or_else(|| SamplerError::UnknownTicker(t.to_string()))
        })
        .collect::<Result<Vec<usize>, _>>()?;
    members.sort_unstable();
    let label = format!("portfolio({},{})#{}", spec.m, spec.n, spec.draw_index);
    let rows = rolling_leading(panel, tau, &members, opts, &label, |_, _| {})?;
    Ok(rows.into_iter().map(|r| r.1).collect())
}

/// Linear-interpolation quantile at rank `p (D - 1)`.
pub fn percentile(values: &[f64], p: f64) -> Result<f64, SamplerError> {
    if values.is_empty() {
        return Err(SamplerError::EmptyInput);
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(SamplerError::BadProbability(p));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&sorted, p))
}

/// As [`percentile`] on already sorted, non-empty input.
pub(crate) fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let rank = p * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

fn temporal_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    sum / count as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct PercentileCurves {
    pub m: usize,
    pub n: usize,
    pub dates: Vec<NaiveDate>,
    pub p05: Vec<f64>,
    pub p50: Vec<f64>,
    pub p95: Vec<f64>,
}

impl PercentileCurves {
    /// Pointwise percentiles of `series[draw][window]`.
    pub fn from_draws(
        m: usize,
        n: usize,
        dates: Vec<NaiveDate>,
        series: &[Vec<f64>],
    ) -> Result<Self, SamplerError> {
        if series.is_empty() {
            return Err(SamplerError::EmptyInput);
        }
        let len = dates.len();
        if series.iter().any(|s| s.len() != len) {
            return Err(SamplerError::InvalidConfig(
                "draw series lengths differ from the date axis".into(),
            ));
        }
        let mut curves = Self {
            m,
            n,
            dates,
            p05: Vec::with_capacity(len),
            p50: Vec::with_capacity(len),
            p95: Vec::with_capacity(len),
        };
        let mut column = vec![0.0; series.len()];
        for w in 0..len {
            for (c, s) in column.iter_mut().zip(series) {
                *c = s[w];
            }
            column.sort_by(f64::total_cmp);
            curves.p05.push(percentile_sorted(&column, 0.05));
            curves.p50.push(percentile_sorted(&column, 0.50));
            curves.p95.push(percentile_sorted(&column, 0.95));
        }
        Ok(curves)
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Temporal mean of the median curve.
    pub fn mu(&self) -> f64 {
        temporal_mean(self.p50.iter().copied())
    }

    /// Temporal mean of the 5-95 percentile band width.
    pub fn sigma(&self) -> f64 {
        temporal_mean(self.p95.iter().zip(&self.p05).map(|(hi, lo)| hi - lo))
    }

    /// `date,p05,p50,p95`
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["date", "p05", "p50", "p95"])?;
        for k in 0..self.len() {
            out.write_record([
                self.dates[k].format(DATE_FORMAT).to_string(),
                self.p05[k].to_string(),
                self.p50[k].to_string(),
                self.p95[k].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(m: usize, n: usize, r: R) -> Result<Self, SamplerError> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["date", "p05", "p50", "p95"] {
            return Err(SamplerError::BadTable(format!("curve header {headers:?}")));
        }
        let mut curves = Self {
            m,
            n,
            dates: vec![],
            p05: vec![],
            p50: vec![],
            p95: vec![],
        };
        for rec in rdr.records() {
            let rec = rec?;
            let bad = |what: &str| SamplerError::BadTable(format!("{what} in {rec:?}"));
            curves.dates.push(
                NaiveDate::parse_from_str(&rec[0], DATE_FORMAT).map_err(|_| bad("date"))?,
            );
            let num = |k: usize| rec[k].parse::<f64>().map_err(|_| bad("number"));
            curves.p05.push(num(1)?);
            curves.p50.push(num(2)?);
            curves.p95.push(num(3)?);
        }
        Ok(curves)
    }
}

/// Values over a rectangular `(m, n)` grid; cells may be missing.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    m_values: Vec<usize>,
    n_values: Vec<usize>,
    values: Vec<Option<f64>>,
}

impl GridTable {
    pub fn empty(m_range: RangeInclusive<usize>, n_range: RangeInclusive<usize>) -> Self {
        let m_values: Vec<usize> = m_range.collect();
        let n_values: Vec<usize> = n_range.collect();
        let values = vec![None; m_values.len() * n_values.len()];
        Self {
            m_values,
            n_values,
            values,
        }
    }

    /// `rows[i][j]` is the value at `(m_start + i, n_start + j)`.
    pub fn from_rows(m_start: usize, n_start: usize, rows: &[Vec<f64>]) -> Result<Self, SamplerError> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(SamplerError::BadTable("rows must be non-empty and equally long".into()));
        }
        let mut t = Self::empty(m_start..=m_start + rows.len() - 1, n_start..=n_start + width - 1);
        t.values = rows.iter().flatten().map(|&v| Some(v)).collect();
        Ok(t)
    }

    pub fn m_values(&self) -> &[usize] {
        &self.m_values
    }

    pub fn n_values(&self) -> &[usize] {
        &self.n_values
    }

    fn slot(&self, m: usize, n: usize) -> Option<usize> {
        let i = m.checked_sub(*self.m_values.first()?)?;
        let j = n.checked_sub(*self.n_values.first()?)?;
        (i < self.m_values.len() && j < self.n_values.len()).then(|| i * self.n_values.len() + j)
    }

    pub fn get(&self, m: usize, n: usize) -> Option<f64> {
        self.slot(m, n).and_then(|k| self.values[k])
    }

    /// Panics if `(m, n)` is outside the grid.
    pub fn set(&mut self, m: usize, n: usize, v: f64) {
        let k = self.slot(m, n).expect("cell outside grid");
        self.values[k] = Some(v);
    }

    /// Rows are `m`, columns `n`; header `m,<n values>`; missing cells empty.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["m".to_string()];
        header.extend(self.n_values.iter().map(usize::to_string));
        out.write_record(&header)?;
        for &m in &self.m_values {
            let mut row = vec![m.to_string()];
            row.extend(
                self.n_values
                    .iter()
                    .map(|&n| self.get(m, n).map_or(String::new(), |v| v.to_string())),
            );
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, SamplerError> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let bad = |what: String| SamplerError::BadTable(what);
        if headers.get(0) != Some("m") || headers.len() < 2 {
            return Err(bad(format!("header {headers:?}")));
        }
        let n_values = headers
            .iter()
            .skip(1)
            .map(|h| h.trim().parse::<usize>().map_err(|_| bad(format!("column {h:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let mut m_values = vec![];
        let mut values = vec![];
        for rec in rdr.records() {
            let rec = rec?;
            m_values.push(rec[0].trim().parse::<usize>().map_err(|_| bad(format!("row {rec:?}")))?);
            for cell in rec.iter().skip(1) {
                let cell = cell.trim();
                values.push(if cell.is_empty() {
                    None
                } else {
                    Some(cell.parse::<f64>().map_err(|_| bad(format!("value {cell:?}")))?)
                });
            }
        }
        let contiguous = |v: &[usize]| v.windows(2).all(|w| w[1] == w[0] + 1);
        if m_values.is_empty() || !contiguous(&m_values) || !contiguous(&n_values) {
            return Err(bad("grid axes must be contiguous and non-empty".into()));
        }
        Ok(Self {
            m_values,
            n_values,
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSummary {
    pub mu: GridTable,
    pub sigma: GridTable,
    pub draws: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridConfig {
    pub m_range: RangeInclusive<usize>,
    pub n_range: RangeInclusive<usize>,
    pub draws: usize,
    pub master_seed: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            m_range: 2..=10,
            n_range: 2..=9,
            draws: crate::DEFAULT_DRAWS,
            master_seed: 0,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.draws == 0 {
            return Err(SamplerError::InvalidConfig("draws must be at least 1".into()));
        }
        if self.m_range.is_empty() || self.n_range.is_empty() {
            return Err(SamplerError::InvalidConfig("grid ranges must be non-empty".into()));
        }
        if *self.m_range.start() == 0 || *self.n_range.start() == 0 {
            return Err(SamplerError::InvalidConfig("grid ranges start at 1".into()));
        }
        if *self.m_range.start() == 1 && *self.n_range.start() == 1 {
            return Err(SamplerError::InvalidConfig(
                "single-equity portfolios (1,1) are not allowed".into(),
            ));
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<(usize, usize)> {
        self.m_range
            .clone()
            .flat_map(|m| self.n_range.clone().map(move |n| (m, n)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedCell {
    pub m: usize,
    pub n: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingResult {
    pub tau: usize,
    /// One entry per feasible cell, ordered by `(m, n)`.
    pub curves: Vec<PercentileCurves>,
    pub summary: GridSummary,
    pub skipped: Vec<SkippedCell>,
}

impl SamplingResult {
    pub fn curve(&self, m: usize, n: usize) -> Option<&PercentileCurves> {
        self.curves.iter().find(|c| c.m == m && c.n == n)
    }
}

/// Samples every grid cell. Draws run in parallel; each draw's randomness is
/// keyed by its lineage, and results are gathered in draw order, so the output
/// is identical for any thread count. Infeasible cells are skipped and listed.
pub fn sample_grid(
    panel: &ReturnPanel,
    tau: usize,
    config: &GridConfig,
    opts: &EigenOptions,
) -> Result<SamplingResult, SamplerError> {
    config.validate()?;
    let map = SectorMap::from_panel(panel);
    let dates: Vec<NaiveDate> = panel
        .dates()
        .get(tau.saturating_sub(1)..)
        .unwrap_or_default()
        .to_vec();
    let mut summary = GridSummary {
        mu: GridTable::empty(config.m_range.clone(), config.n_range.clone()),
        sigma: GridTable::empty(config.m_range.clone(), config.n_range.clone()),
        draws: config.draws,
        master_seed: config.master_seed,
    };
    let mut curves = vec![];
    let mut skipped = vec![];
    for (m, n) in config.cells() {
        if let Err(e) = check_feasible(m, n, &map) {
            skipped.push(SkippedCell {
                m,
                n,
                reason: e.to_string(),
            });
            continue;
        }
        let series = (0..config.draws)
            .into_par_iter()
            .map(|draw| {
                let lineage = SeedLineage {
                    master_seed: config.master_seed,
                    m,
                    n,
                    draw_index: draw,
                };
                let spec = draw_portfolio(m, n, &map, lineage)?;
                portfolio_lambda_series(&spec, panel, tau, opts).map_err(|e| match e {
                    SamplerError::Spectral(source) => SamplerError::Cell { m, n, draw, source },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let cell = PercentileCurves::from_draws(m, n, dates.clone(), &series)?;
        summary.mu.set(m, n, cell.mu());
        summary.sigma.set(m, n, cell.sigma());
        curves.push(cell);
    }
    Ok(SamplingResult {
        tau,
        curves,
        summary,
        skipped,
    })
}

/// Walks from `start` to `end`, stepping to whichever of `(m+1, n)` and
/// `(m, n+1)` has the smaller value; ties go to `(m+1, n)`.
pub fn greedy_path(
    table: &GridTable,
    start: (usize, usize),
    end: (usize, usize),
) -> Result<Vec<(usize, usize)>, SamplerError> {
    if start.0 > end.0 || start.1 > end.1 {
        return Err(SamplerError::InvalidConfig(format!(
            "path end {end:?} is not above-right of start {start:?}"
        )));
    }
    for m in start.0..=end.0 {
        for n in start.1..=end.1 {
            table
                .get(m, n)
                .ok_or(SamplerError::IncompleteTable { m, n })?;
        }
    }
    let value = |m, n| table.get(m, n).expect("checked above");
    let (mut m, mut n) = start;
    let mut path = vec![start];
    while (m, n) != end {
        if m == end.0 {
            n += 1;
        } else if n == end.1 || value(m + 1, n) <= value(m, n + 1) {
            m += 1;
        } else {
            n += 1;
        }
        path.push((m, n));
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(sizes: &[(&str, usize)]) -> SectorMap {
        SectorMap::new(
            sizes
                .iter()
                .map(|&(s, k)| (s.to_string(), (0..k).map(|i| format!("{s}{i}")).collect()))
                .collect(),
        )
    }

    fn lineage(draw: usize) -> SeedLineage {
        SeedLineage {
            master_seed: 11,
            m: 0,
            n: 0,
            draw_index: draw,
        }
    }

    #[test]
    fn percentile_examples() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0], 0.5).unwrap(), 2.0);
        assert!((percentile(&[0.0, 10.0], 0.05).unwrap() - 0.5).abs() < 1e-15);
        assert!((percentile(&[10.0, 0.0], 0.05).unwrap() - 0.5).abs() < 1e-15);
        for p in [0.0, 0.3, 1.0] {
            assert_eq!(percentile(&[5.0], p).unwrap(), 5.0);
        }
        assert!(matches!(percentile(&[], 0.5), Err(SamplerError::EmptyInput)));
        assert!(matches!(
            percentile(&[1.0], 1.5),
            Err(SamplerError::BadProbability(_))
        ));
    }

    #[test]
    fn forced_draw_uses_every_sector() {
        let sm = map(&[("A", 3), ("B", 5), ("C", 4)]);
        for d in 0..20 {
            let p = draw_portfolio(3, 3, &sm, lineage(d)).unwrap();
            assert_eq!(p.chosen.len(), 3);
            for (s, t) in &p.chosen {
                assert_eq!(t.len(), 3);
                assert!(t.iter().all(|x| x.starts_with(s.as_str())));
                let mut u = t.clone();
                u.sort();
                u.dedup();
                assert_eq!(u.len(), 3);
            }
        }
    }

    #[test]
    fn small_sector_is_never_eligible() {
        let sm = map(&[
            ("CommunicationServices", 10),
            ("ConsumerDiscretionary", 39),
            ("ConsumerStaples", 25),
            ("Energy", 18),
            ("Financials", 46),
            ("Healthcare", 44),
            ("Industrials", 55),
            ("InformationTechnology", 36),
            ("Materials", 19),
            ("RealEstate", 24),
            ("Utilities", 23),
        ]);
        for d in 0..300 {
            let p = draw_portfolio(5, 11, &sm, lineage(d)).unwrap();
            assert!(!p.chosen.contains_key("CommunicationServices"));
        }
    }

    #[test]
    fn draws_are_reproducible() {
        let sm = map(&[("A", 8), ("B", 8), ("C", 8), ("D", 8)]);
        let a = draw_portfolio(2, 3, &sm, lineage(4)).unwrap();
        assert_eq!(a, draw_portfolio(2, 3, &sm, lineage(4)).unwrap());
        let differs = (0..10).any(|d| draw_portfolio(2, 3, &sm, lineage(d)).unwrap() != a);
        assert!(differs);
    }

    #[test]
    fn infeasible_draws() {
        let sm = map(&[("A", 2), ("B", 5)]);
        assert!(matches!(
            draw_portfolio(3, 2, &sm, lineage(0)),
            Err(SamplerError::InsufficientSectors { m: 3, eligible: 2 })
        ));
        assert!(matches!(
            draw_portfolio(2, 3, &sm, lineage(0)),
            Err(SamplerError::InsufficientEquities { n: 3, .. })
        ));
    }

    #[test]
    fn curves_summaries() {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let dates = vec![d0, d0.succ_opt().unwrap()];
        let series = vec![vec![0.2, 0.4], vec![0.6, 0.8], vec![0.4, 0.6]];
        let c = PercentileCurves::from_draws(2, 2, dates, &series).unwrap();
        assert_eq!(c.p50, vec![0.4, 0.6]);
        assert!((c.mu() - 0.5).abs() < 1e-15);
        // band at each t: 0.9*0.4 = 0.36
        assert!((c.sigma() - 0.36).abs() < 1e-12);

        let mut buf = vec![];
        c.write_csv(&mut buf).unwrap();
        let back = PercentileCurves::read_csv(2, 2, buf.as_slice()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn grid_table_round_trip() {
        let mut t = GridTable::empty(2..=3, 2..=4);
        t.set(2, 2, 0.5);
        t.set(3, 4, 0.25);
        assert_eq!(t.get(3, 4), Some(0.25));
        assert_eq!(t.get(3, 3), None);
        assert_eq!(t.get(1, 2), None);
        assert_eq!(t.get(2, 5), None);
        let mut buf = vec![];
        t.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "m,2,3,4\n2,0.5,,\n3,,,0.25\n"
        );
        assert_eq!(GridTable::read_csv(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn greedy_on_constant_table_prefers_sectors() {
        let t = GridTable::from_rows(2, 2, &vec![vec![0.5; 3]; 3]).unwrap();
        let path = greedy_path(&t, (2, 2), (4, 4)).unwrap();
        assert_eq!(path, vec![(2, 2), (3, 2), (4, 2), (4, 3), (4, 4)]);
    }

    #[test]
    fn greedy_needs_complete_rectangle() {
        let mut t = GridTable::empty(2..=3, 2..=3);
        t.set(2, 2, 1.0);
        t.set(2, 3, 1.0);
        t.set(3, 2, 1.0);
        assert!(matches!(
            greedy_path(&t, (2, 2), (3, 3)),
            Err(SamplerError::IncompleteTable { m: 3, n: 3 })
        ));
    }
}
