//! Price and sector ingestion.
//!
//! `prices.csv` is `date,TICK1,TICK2,...` with one row per trading day and an
//! empty cell for a missing close. `sectors.csv` is `ticker,sector`. Raw
//! panels go through [`align_and_clean`] before they become a [`PricePanel`].

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("ticker {0} has no sector")]
    MissingSector(String),
    #[error("duplicate ticker {0}")]
    DuplicateTicker(String),
    #[error("non-positive or non-finite price for {ticker} on {date}")]
    NonPositivePrice { ticker: String, date: NaiveDate },
    #[error("row {row}: cannot parse date {value:?}")]
    UnparsableDate { row: u64, value: String },
    #[error("row {row}: cannot parse price {value:?} for {ticker}")]
    UnparsablePrice { row: u64, ticker: String, value: String },
    #[error("row {row}: dates must be strictly increasing")]
    DatesNotIncreasing { row: u64 },
    #[error("ticker {0} exceeds the missing-data tolerance")]
    TooManyGaps(String),
    #[error("no ticker survives cleaning")]
    EmptyPanel,
    #[error("panel needs at least two dates, got {0}")]
    TooFewDates(usize),
    #[error("inconsistent panel shape: {0}")]
    Shape(String),
}

/// Missing-data policy applied by [`align_and_clean`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningPolicy {
    /// Longest run of consecutive missing closes that is forward-filled.
    pub gap_limit: usize,
    /// Tickers missing more than this fraction of all dates are dropped.
    pub drop_fraction: f64,
    /// Turn every removal into a [`IngestError::TooManyGaps`] error.
    pub strict: bool,
}

impl Default for CleaningPolicy {
    fn default() -> Self {
        Self {
            gap_limit: 5,
            drop_fraction: 0.1,
            strict: false,
        }
    }
}

/// A ticker dropped during cleaning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub ticker: String,
    pub reason: String,
}

/// Prices as read from disk, possibly with holes.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPanel {
    pub tickers: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// One series per ticker, `cells[i][d]`.
    pub cells: Vec<Vec<Option<f64>>>,
}

/// Aligned, gap-free daily closes with one sector per ticker.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    tickers: Vec<String>,
    sectors: Vec<String>,
    dates: Vec<NaiveDate>,
    prices: Vec<Vec<f64>>,
}

impl PricePanel {
    pub fn new(
        tickers: Vec<String>,
        sectors: Vec<String>,
        dates: Vec<NaiveDate>,
        prices: Vec<Vec<f64>>,
    ) -> Result<Self, IngestError> {
        if tickers.is_empty() {
            return Err(IngestError::EmptyPanel);
        }
        if sectors.len() != tickers.len() || prices.len() != tickers.len() {
            return Err(IngestError::Shape(format!(
                "{} tickers, {} sectors, {} price series",
                tickers.len(),
                sectors.len(),
                prices.len()
            )));
        }
        let mut seen = HashSet::new();
        for t in &tickers {
            if !seen.insert(t.as_str()) {
                return Err(IngestError::DuplicateTicker(t.clone()));
            }
        }
        for (t, s) in tickers.iter().zip(&sectors) {
            if s.trim().is_empty() {
                return Err(IngestError::MissingSector(t.clone()));
            }
        }
        if dates.len() < 2 {
            return Err(IngestError::TooFewDates(dates.len()));
        }
        for (k, w) in dates.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(IngestError::DatesNotIncreasing { row: k as u64 + 2 });
            }
        }
        for (t, series) in tickers.iter().zip(&prices) {
            if series.len() != dates.len() {
                return Err(IngestError::Shape(format!(
                    "{t} has {} prices for {} dates",
                    series.len(),
                    dates.len()
                )));
            }
            if let Some(d) = series.iter().position(|&p| !(p.is_finite() && p > 0.0)) {
                return Err(IngestError::NonPositivePrice {
                    ticker: t.clone(),
                    date: dates[d],
                });
            }
        }
        Ok(Self {
            tickers,
            sectors,
            dates,
            prices,
        })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    /// Sector of each ticker, aligned with [`tickers`](Self::tickers).
    pub fn sectors(&self) -> &[String] {
        &self.sectors
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self) -> &[Vec<f64>] {
        &self.prices
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    /// Number of distinct sectors.
    pub fn n_sectors(&self) -> usize {
        self.sectors.iter().collect::<HashSet<_>>().len()
    }

    /// Writes `date,TICK1,...` rows.
    pub fn write_prices_csv<W: Write>(&self, w: W) -> Result<(), IngestError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["date".to_string()];
        header.extend(self.tickers.iter().cloned());
        out.write_record(&header)?;
        for (d, date) in self.dates.iter().enumerate() {
            let mut row = vec![date.format(DATE_FORMAT).to_string()];
            row.extend(self.prices.iter().map(|s| s[d].to_string()));
            out.write_record(&row)?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Writes `ticker,sector` rows.
    pub fn write_sectors_csv<W: Write>(&self, w: W) -> Result<(), IngestError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["ticker", "sector"])?;
        for (t, s) in self.tickers.iter().zip(&self.sectors) {
            out.write_record([t, s])?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Log returns sharing the labels of the panel they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    tickers: Vec<String>,
    sectors: Vec<String>,
    /// Date of each return, i.e. the later of the two closes.
    dates: Vec<NaiveDate>,
    returns: Vec<Vec<f64>>,
}

impl ReturnPanel {
    /// Builds a panel straight from returns. Used by tests and bindings that
    /// already hold return series.
    pub fn from_returns(
        tickers: Vec<String>,
        sectors: Vec<String>,
        dates: Vec<NaiveDate>,
        returns: Vec<Vec<f64>>,
    ) -> Result<Self, IngestError> {
        if tickers.is_empty() {
            return Err(IngestError::EmptyPanel);
        }
        if sectors.len() != tickers.len() || returns.len() != tickers.len() {
            return Err(IngestError::Shape("labels and return series disagree".into()));
        }
        for (t, r) in tickers.iter().zip(&returns) {
            if r.len() != dates.len() {
                return Err(IngestError::Shape(format!(
                    "{t} has {} returns for {} dates",
                    r.len(),
                    dates.len()
                )));
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(IngestError::Shape(format!("{t} has non-finite returns")));
            }
        }
        Ok(Self {
            tickers,
            sectors,
            dates,
            returns,
        })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn sectors(&self) -> &[String] {
        &self.sectors
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    /// `returns()[i][t]`, series-major.
    pub fn returns(&self) -> &[Vec<f64>] {
        &self.returns
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    /// Number of return observations `T`.
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn index_of(&self, ticker: &str) -> Option<usize> {
        self.tickers.iter().position(|t| t == ticker)
    }

    /// Ticker indices per sector, sectors in lexicographic order.
    pub fn sector_members(&self) -> BTreeMap<String, Vec<usize>> {
        let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, s) in self.sectors.iter().enumerate() {
            out.entry(s.clone()).or_default().push(i);
        }
        out
    }
}

/// `r_i(t) = ln(c_i(t) / c_i(t-1))`.
pub fn log_returns(panel: &PricePanel) -> ReturnPanel {
    let returns = panel
        .prices
        .iter()
        .map(|s| s.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
        .collect();
    ReturnPanel {
        tickers: panel.tickers.clone(),
        sectors: panel.sectors.clone(),
        dates: panel.dates[1..].to_vec(),
        returns,
    }
}

fn longest_missing_run(cells: &[Option<f64>]) -> usize {
    let mut best = 0;
    let mut run = 0;
    for c in cells {
        if c.is_none() {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best
}

/// Restricts the panel to the common date range of the surviving tickers and
/// forward-fills short gaps. Returns the cleaned panel and the removals.
pub fn align_and_clean(
    raw: &RawPanel,
    policy: &CleaningPolicy,
) -> Result<(RawPanel, Vec<Removal>), IngestError> {
    if raw.cells.len() != raw.tickers.len() {
        return Err(IngestError::Shape("tickers and series disagree".into()));
    }
    let nd = raw.dates.len();
    let mut removals = Vec::new();
    let mut keep = vec![true; raw.tickers.len()];

    let mut remove = |i: usize, reason: String, keep: &mut Vec<bool>| {
        if policy.strict {
            return Err(IngestError::TooManyGaps(raw.tickers[i].clone()));
        }
        keep[i] = false;
        removals.push(Removal {
            ticker: raw.tickers[i].clone(),
            reason,
        });
        Ok(())
    };

    for (i, series) in raw.cells.iter().enumerate() {
        if series.len() != nd {
            return Err(IngestError::Shape(format!(
                "{} has {} cells for {nd} dates",
                raw.tickers[i],
                series.len()
            )));
        }
        let missing = series.iter().filter(|c| c.is_none()).count();
        if missing == nd || missing as f64 > policy.drop_fraction * nd as f64 {
            remove(
                i,
                format!("missing {missing} of {nd} dates"),
                &mut keep,
            )?;
        }
    }

    // Dropping a ticker can widen the common range and expose new interior
    // gaps in the others, so iterate to a fixed point.
    let (start, end) = loop {
        let mut start = 0usize;
        let mut end = usize::MAX;
        let mut any = false;
        for (i, series) in raw.cells.iter().enumerate() {
            if !keep[i] {
                continue;
            }
            let first = series.iter().position(Option::is_some);
            let last = series.iter().rposition(Option::is_some);
            let (Some(f), Some(l)) = (first, last) else {
                remove(i, "no observations".into(), &mut keep)?;
                continue;
            };
            start = start.max(f);
            end = end.min(l);
            any = true;
        }
        if !any || start > end {
            return Err(IngestError::EmptyPanel);
        }
        let mut changed = false;
        for i in 0..raw.cells.len() {
            if !keep[i] {
                continue;
            }
            let run = longest_missing_run(&raw.cells[i][start..=end]);
            if run > policy.gap_limit {
                remove(
                    i,
                    format!(
                        "gap of {run} consecutive dates exceeds limit {}",
                        policy.gap_limit
                    ),
                    &mut keep,
                )?;
                changed = true;
            }
        }
        if !changed {
            break (start, end);
        }
    };

    let mut tickers = Vec::new();
    let mut cells = Vec::new();
    for (i, series) in raw.cells.iter().enumerate() {
        if !keep[i] {
            continue;
        }
        let mut last = None;
        let filled = series[start..=end]
            .iter()
            .map(|c| {
                if c.is_some() {
                    last = *c;
                }
                last
            })
            .collect();
        tickers.push(raw.tickers[i].clone());
        cells.push(filled);
    }
    Ok((
        RawPanel {
            tickers,
            dates: raw.dates[start..=end].to_vec(),
            cells,
        },
        removals,
    ))
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a `date,TICK1,...` price table. Prices are checked for positivity
/// here so that a zero close fails loudly instead of being treated as a gap.
pub fn read_raw_prices<R: Read>(reader: R) -> Result<RawPanel, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(IngestError::BadHeader(
            "expected a date column followed by ticker columns".into(),
        ));
    }
    if !headers[0].eq_ignore_ascii_case("date") {
        return Err(IngestError::BadHeader(format!(
            "first column must be `date`, found {:?}",
            &headers[0]
        )));
    }
    let tickers: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut seen = HashSet::new();
    for t in &tickers {
        if t.is_empty() {
            return Err(IngestError::BadHeader("empty ticker name".into()));
        }
        if !seen.insert(t.as_str()) {
            return Err(IngestError::DuplicateTicker(t.clone()));
        }
    }

    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut cells: Vec<Vec<Option<f64>>> = vec![Vec::new(); tickers.len()];
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map(|p| p.line()).unwrap_or(0);
        let date = NaiveDate::parse_from_str(&rec[0], DATE_FORMAT).map_err(|_| {
            IngestError::UnparsableDate {
                row,
                value: rec[0].to_string(),
            }
        })?;
        if dates.last().is_some_and(|&prev| date <= prev) {
            return Err(IngestError::DatesNotIncreasing { row });
        }
        for (i, ticker) in tickers.iter().enumerate() {
            let raw = rec.get(i + 1).unwrap_or("");
            let cell = if raw.is_empty() {
                None
            } else {
                let p: f64 = raw.parse().map_err(|_| IngestError::UnparsablePrice {
                    row,
                    ticker: ticker.clone(),
                    value: raw.to_string(),
                })?;
                if !(p.is_finite() && p > 0.0) {
                    return Err(IngestError::NonPositivePrice {
                        ticker: ticker.clone(),
                        date,
                    });
                }
                Some(p)
            };
            cells[i].push(cell);
        }
        dates.push(date);
    }
    Ok(RawPanel {
        tickers,
        dates,
        cells,
    })
}

/// Parses a `ticker,sector` table.
pub fn read_sector_map<R: Read>(reader: R) -> Result<BTreeMap<String, String>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2
        || !headers[0].eq_ignore_ascii_case("ticker")
        || !headers[1].eq_ignore_ascii_case("sector")
    {
        return Err(IngestError::BadHeader(
            "sector file must start with `ticker,sector`".into(),
        ));
    }
    let mut map = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let ticker = rec[0].to_string();
        let sector = rec.get(1).unwrap_or("").to_string();
        if sector.is_empty() {
            return Err(IngestError::MissingSector(ticker));
        }
        if map.insert(ticker.clone(), sector).is_some() {
            return Err(IngestError::DuplicateTicker(ticker));
        }
    }
    Ok(map)
}

/// Attaches sectors to a raw price table, cleans it and validates the result.
pub fn assemble_panel(
    raw: &RawPanel,
    sector_map: &BTreeMap<String, String>,
    policy: &CleaningPolicy,
) -> Result<(PricePanel, Vec<Removal>), IngestError> {
    if let Some(t) = raw.tickers.iter().find(|t| !sector_map.contains_key(*t)) {
        return Err(IngestError::MissingSector(t.clone()));
    }
    let (clean, removals) = align_and_clean(raw, policy)?;
    let sectors = clean
        .tickers
        .iter()
        .map(|t| sector_map[t].clone())
        .collect();
    let prices = clean
        .cells
        .into_iter()
        .map(|s| s.into_iter().map(|c| c.expect("cleaned panel is dense")).collect())
        .collect();
    let panel = PricePanel::new(clean.tickers, sectors, clean.dates, prices)?;
    Ok((panel, removals))
}

/// Loads `prices.csv` and `sectors.csv`, cleans and validates.
pub fn load_price_panel(
    prices: &Path,
    sectors: &Path,
    policy: &CleaningPolicy,
) -> Result<(PricePanel, Vec<Removal>), IngestError> {
    let raw = read_raw_prices(open(prices)?)?;
    let map = read_sector_map(open(sectors)?)?;
    assemble_panel(&raw, &map, policy)
}
