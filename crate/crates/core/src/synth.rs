//! Seeded synthetic markets.
//!
//! The factor market draws
//! `r_i(t) = beta_market * f(t) + beta_sector * g_{s(i)}(t) + sigma_idio * e_i(t)`
//! with independent standard Gaussian factors. Every factor and every
//! idiosyncratic series owns a ChaCha stream keyed by `(seed, stream id)`, so a
//! series never depends on how many others were generated before it.

use chrono::{Datelike, NaiveDate, Weekday};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{IngestError, PricePanel};
use crate::seed::rng_for;

const BASE_PRICE: f64 = 100.0;
const STREAM_MARKET: u64 = 1;
const STREAM_SECTOR: u64 = 2;
const STREAM_IDIO: u64 = 3;
const STREAM_DEGENERATE: u64 = 4;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("anti-correlated market needs exactly two series, got {0}")]
    AntiRequiresTwo(usize),
    #[error("cumulative returns overflow the price range; reduce T or the loadings")]
    PriceOverflow,
    #[error(transparent)]
    Panel(#[from] IngestError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_sectors: usize,
    pub equities_per_sector: Vec<usize>,
    /// Number of return observations; the panel has `t + 1` dates.
    pub t: usize,
    pub beta_market: f64,
    pub beta_sector: f64,
    pub sigma_idio: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// `n_sectors` sectors of `per_sector` equities each.
    pub fn uniform(
        n_sectors: usize,
        per_sector: usize,
        t: usize,
        beta_market: f64,
        beta_sector: f64,
        sigma_idio: f64,
        seed: u64,
    ) -> Self {
        Self {
            n_sectors,
            equities_per_sector: vec![per_sector; n_sectors],
            t,
            beta_market,
            beta_sector,
            sigma_idio,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.n_sectors == 0 || self.equities_per_sector.len() != self.n_sectors {
            return bad("equities_per_sector must list one count per sector");
        }
        if self.equities_per_sector.contains(&0) {
            return bad("every sector needs at least one equity");
        }
        if self.t == 0 {
            return bad("t must be at least 1");
        }
        for (name, v) in [
            ("beta_market", self.beta_market),
            ("beta_sector", self.beta_sector),
            ("sigma_idio", self.sigma_idio),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SynthError::InvalidConfig(format!(
                    "{name} must be finite and non-negative"
                )));
            }
        }
        let total =
            self.beta_market.powi(2) + self.beta_sector.powi(2) + self.sigma_idio.powi(2);
        if total <= 0.0 {
            return bad("at least one loading must be positive");
        }
        Ok(())
    }

    pub fn n_equities(&self) -> usize {
        self.equities_per_sector.iter().sum()
    }

    /// Population correlation between two distinct equities.
    pub fn population_correlation(&self, same_sector: bool) -> f64 {
        let bm = self.beta_market.powi(2);
        let bs = self.beta_sector.powi(2);
        let total = bm + bs + self.sigma_idio.powi(2);
        (bm + if same_sector { bs } else { 0.0 }) / total
    }
}

fn gaussian_series(seed: u64, stream: u64, id: u64, len: usize) -> Vec<f64> {
    let mut rng = rng_for(seed, &[stream, id]);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// `len` consecutive weekdays starting 2000-01-03.
pub fn business_days(len: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(len);
    let mut day = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
    while out.len() < len {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(day);
        }
        day = day.succ_opt().expect("date in range");
    }
    out
}

fn prices_from_returns(returns: &[f64]) -> Result<Vec<f64>, SynthError> {
    let mut out = Vec::with_capacity(returns.len() + 1);
    out.push(BASE_PRICE);
    let mut cum = 0.0;
    for r in returns {
        cum += r;
        let p = BASE_PRICE * cum.exp();
        if !(p.is_finite() && p > 0.0) {
            return Err(SynthError::PriceOverflow);
        }
        out.push(p);
    }
    Ok(out)
}

/// Ticker label for equity `e` of sector `s`.
pub fn synth_ticker(s: usize, e: usize) -> String {
    format!("S{:02}E{:02}", s + 1, e + 1)
}

/// Sector label for sector `s`.
pub fn synth_sector(s: usize) -> String {
    format!("Sector{:02}", s + 1)
}

/// The exact factor-model returns, one series per equity in sector order.
pub fn factor_returns(config: &SynthConfig) -> Result<Vec<Vec<f64>>, SynthError> {
    config.validate()?;
    let t = config.t;
    let market = gaussian_series(config.seed, STREAM_MARKET, 0, t);
    let sectors: Vec<Vec<f64>> = (0..config.n_sectors)
        .map(|s| gaussian_series(config.seed, STREAM_SECTOR, s as u64, t))
        .collect();
    let owners: Vec<usize> = config
        .equities_per_sector
        .iter()
        .enumerate()
        .flat_map(|(s, &c)| std::iter::repeat_n(s, c))
        .collect();
    let series = owners
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            let idio = gaussian_series(config.seed, STREAM_IDIO, i as u64, t);
            (0..t)
                .map(|k| {
                    config.beta_market * market[k]
                        + config.beta_sector * sectors[s][k]
                        + config.sigma_idio * idio[k]
                })
                .collect()
        })
        .collect();
    Ok(series)
}

/// Sector factor market as a price panel starting at 100.
pub fn generate_factor_market(config: &SynthConfig) -> Result<PricePanel, SynthError> {
    let returns = factor_returns(config)?;
    let mut tickers = Vec::new();
    let mut sectors = Vec::new();
    for (s, &count) in config.equities_per_sector.iter().enumerate() {
        for e in 0..count {
            tickers.push(synth_ticker(s, e));
            sectors.push(synth_sector(s));
        }
    }
    let prices = returns
        .iter()
        .map(|r| prices_from_returns(r))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PricePanel::new(
        tickers,
        sectors,
        business_days(config.t + 1),
        prices,
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegenerateKind {
    /// Every series equal.
    Identical,
    /// I.i.d. Gaussian returns.
    Independent,
    /// Two series, the second the negation of the first.
    Anti,
}

impl std::str::FromStr for DegenerateKind {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identical" => Ok(Self::Identical),
            "independent" => Ok(Self::Independent),
            "anti" => Ok(Self::Anti),
            other => Err(SynthError::InvalidConfig(format!(
                "unknown degenerate kind {other:?}"
            ))),
        }
    }
}

/// Degenerate test markets. All tickers share one sector, `Market`.
pub fn generate_degenerate_market(
    kind: DegenerateKind,
    n: usize,
    t: usize,
    seed: u64,
) -> Result<PricePanel, SynthError> {
    if kind == DegenerateKind::Anti && n != 2 {
        return Err(SynthError::AntiRequiresTwo(n));
    }
    if n < 2 {
        return Err(SynthError::InvalidConfig("need at least two series".into()));
    }
    if t == 0 {
        return Err(SynthError::InvalidConfig("t must be at least 1".into()));
    }
    let base = gaussian_series(seed, STREAM_DEGENERATE, 0, t);
    let returns: Vec<Vec<f64>> = match kind {
        DegenerateKind::Identical => vec![base; n],
        DegenerateKind::Anti => {
            let neg = base.iter().map(|x| -x).collect();
            vec![base, neg]
        }
        DegenerateKind::Independent => (0..n)
            .map(|i| gaussian_series(seed, STREAM_DEGENERATE, i as u64, t))
            .collect(),
    };
    let tickers = (0..n).map(|i| format!("D{:02}", i + 1)).collect();
    let prices = returns
        .iter()
        .map(|r| prices_from_returns(r))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PricePanel::new(
        tickers,
        vec!["Market".to_string(); n],
        business_days(t + 1),
        prices,
    )?)
}
