//! Resolved run configuration: flags, then the config file, then defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::args::{ClusterArgs, GreedyArgs, GridArgs, InputArgs, NetArgs, SynthArgs};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSettings {
    pub n_sectors: usize,
    pub per_sector: usize,
    pub sizes: Option<Vec<usize>>,
    pub t: usize,
    pub beta_market: f64,
    pub beta_sector: f64,
    pub sigma_idio: f64,
    pub degenerate: Option<String>,
    pub degenerate_n: usize,
}

/// Everything a command may read. The output directory is deliberately not
/// serialised, so manifests of identical runs in different places agree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    #[serde(skip)]
    pub out: PathBuf,
    pub prices: Option<PathBuf>,
    pub sectors: Option<PathBuf>,
    pub gap_limit: usize,
    pub drop_fraction: f64,
    pub strict: bool,
    pub tau: usize,
    pub seed: u64,
    pub synth: SynthSettings,
    pub zero_diagonal: bool,
    pub baseline_draws: usize,
    pub draws: usize,
    pub m_range: [usize; 2],
    pub n_range: [usize; 2],
    pub greedy_mu: Option<PathBuf>,
    pub greedy_sigma: Option<PathBuf>,
    pub greedy_start: Option<[usize; 2]>,
    pub greedy_end: Option<[usize; 2]>,
    pub cluster_from: Option<PathBuf>,
    pub cluster_k: usize,
    pub cluster_m_range: [usize; 2],
    pub cluster_n_range: [usize; 2],
    pub dump_windows: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            prices: None,
            sectors: None,
            gap_limit: 5,
            drop_fraction: 0.1,
            strict: false,
            tau: marketmode::DEFAULT_TAU,
            seed: 0,
            synth: SynthSettings {
                n_sectors: 9,
                per_sector: 10,
                sizes: None,
                t: 2000,
                beta_market: 0.4,
                beta_sector: 0.5,
                sigma_idio: 0.77,
                degenerate: None,
                degenerate_n: 3,
            },
            zero_diagonal: false,
            baseline_draws: 500,
            draws: marketmode::DEFAULT_DRAWS,
            m_range: [2, 10],
            n_range: [2, 9],
            greedy_mu: None,
            greedy_sigma: None,
            greedy_start: None,
            greedy_end: None,
            cluster_from: None,
            cluster_k: 4,
            cluster_m_range: [2, 9],
            cluster_n_range: [2, 9],
            dump_windows: false,
        }
    }
}

/// `lo:hi`, inclusive, `1 <= lo <= hi`.
pub fn parse_range(s: &str) -> Result<[usize; 2], CliError> {
    let bad = || CliError::Usage(format!("range {s:?} is not lo:hi with 1 <= lo <= hi"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    if lo == 0 || lo > hi {
        return Err(bad());
    }
    Ok([lo, hi])
}

/// `m,n`
pub fn parse_cell(s: &str) -> Result<[usize; 2], CliError> {
    let bad = || CliError::Usage(format!("cell {s:?} is not m,n"));
    let (m, n) = s.split_once(',').ok_or_else(bad)?;
    Ok([
        m.trim().parse().map_err(|_| bad())?,
        n.trim().parse().map_err(|_| bad())?,
    ])
}

pub fn parse_sizes(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<usize>()
                .ok()
                .filter(|&v| v > 0)
                .ok_or_else(|| CliError::Usage(format!("bad sector size {x:?} in {s:?}")))
        })
        .collect()
}

/// Key-value settings read from a TOML file.
#[derive(Debug, Default)]
pub struct ConfigFile {
    table: toml::Table,
    path: PathBuf,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        Ok(Self {
            table,
            path: path.to_path_buf(),
        })
    }

    fn err(&self, key: &str, want: &str) -> CliError {
        CliError::Usage(format!(
            "config {}: `{key}` must be {want}",
            self.path.display()
        ))
    }

    /// Any value, rendered as the string a flag would carry.
    fn text(&self, key: &str) -> Option<String> {
        self.table.get(key).map(|v| match v {
            toml::Value::String(s) => s.clone(),
            other => other.to_string(),
        })
    }

    fn parsed<T: FromStr>(&self, key: &str, want: &str) -> Result<Option<T>, CliError> {
        self.text(key)
            .map(|s| s.parse::<T>().map_err(|_| self.err(key, want)))
            .transpose()
    }

    fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.table.get(key) {
            None => Ok(false),
            Some(toml::Value::Boolean(b)) => Ok(*b),
            Some(_) => Err(self.err(key, "true or false")),
        }
    }

    pub fn check_keys(&self) -> Result<(), CliError> {
        const KNOWN: &[&str] = &[
            "out", "prices", "sectors", "gap_limit", "drop_fraction", "strict", "tau", "seed",
            "n_sectors", "per_sector", "sizes", "t", "beta_market", "beta_sector", "sigma_idio",
            "degenerate", "degenerate_n", "zero_diagonal", "baseline_draws", "draws", "m_range",
            "n_range", "mu", "sigma", "start", "end", "from", "k", "cluster_m_range",
            "cluster_n_range", "dump_windows",
        ];
        match self.table.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            Some(k) => Err(CliError::Usage(format!(
                "config {}: unknown key `{k}`",
                self.path.display()
            ))),
            None => Ok(()),
        }
    }
}

/// Collects overrides on top of the defaults.
pub struct Resolver<'a> {
    pub file: &'a ConfigFile,
    pub cfg: RunConfig,
}

fn pick<T>(flag: Option<T>, file: Option<T>, slot: &mut T) {
    if let Some(v) = flag.or(file) {
        *slot = v;
    }
}

fn pick_opt<T>(flag: Option<T>, file: Option<T>, slot: &mut Option<T>) {
    if let Some(v) = flag.or(file) {
        *slot = Some(v);
    }
}

impl<'a> Resolver<'a> {
    pub fn new(file: &'a ConfigFile, out: Option<PathBuf>) -> Result<Self, CliError> {
        file.check_keys()?;
        let mut cfg = RunConfig::default();
        pick(out, file.parsed("out", "a path")?, &mut cfg.out);
        Ok(Self { file, cfg })
    }

    pub fn seed(&mut self, seed: Option<u64>) -> Result<(), CliError> {
        let f = self.file.parsed("seed", "an unsigned 64-bit integer")?;
        pick(seed, f, &mut self.cfg.seed);
        Ok(())
    }

    pub fn tau(&mut self, tau: Option<usize>) -> Result<(), CliError> {
        let f = self.file.parsed("tau", "a positive integer")?;
        pick(tau, f, &mut self.cfg.tau);
        if self.cfg.tau < 2 {
            return Err(CliError::Usage(format!("tau must be at least 2, got {}", self.cfg.tau)));
        }
        Ok(())
    }

    pub fn input(&mut self, a: &InputArgs) -> Result<(), CliError> {
        let f = self.file;
        let c = &mut self.cfg;
        pick_opt(a.prices.clone(), f.parsed("prices", "a path")?, &mut c.prices);
        pick_opt(a.sectors.clone(), f.parsed("sectors", "a path")?, &mut c.sectors);
        pick(a.gap_limit, f.parsed("gap_limit", "an integer")?, &mut c.gap_limit);
        pick(a.drop_fraction, f.parsed("drop_fraction", "a number")?, &mut c.drop_fraction);
        c.strict = a.strict || f.flag("strict")?;
        if !(0.0..=1.0).contains(&c.drop_fraction) {
            return Err(CliError::Usage("drop_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn synth(&mut self, a: &SynthArgs) -> Result<(), CliError> {
        let f = self.file;
        let s = &mut self.cfg.synth;
        pick(a.n_sectors, f.parsed("n_sectors", "an integer")?, &mut s.n_sectors);
        pick(a.per_sector, f.parsed("per_sector", "an integer")?, &mut s.per_sector);
        let sizes = a.sizes.clone().or(f.text("sizes"));
        if let Some(text) = sizes {
            s.sizes = Some(parse_sizes(text.trim_matches(['[', ']']))?);
        }
        pick(a.t, f.parsed("t", "an integer")?, &mut s.t);
        pick(a.beta_market, f.parsed("beta_market", "a number")?, &mut s.beta_market);
        pick(a.beta_sector, f.parsed("beta_sector", "a number")?, &mut s.beta_sector);
        pick(a.sigma_idio, f.parsed("sigma_idio", "a number")?, &mut s.sigma_idio);
        pick_opt(a.degenerate.clone(), f.text("degenerate"), &mut s.degenerate);
        pick(a.degenerate_n, f.parsed("degenerate_n", "an integer")?, &mut s.degenerate_n);
        Ok(())
    }

    pub fn net(&mut self, a: &NetArgs) -> Result<(), CliError> {
        let f = self.file;
        self.cfg.zero_diagonal = a.zero_diagonal || f.flag("zero_diagonal")?;
        let k = f.parsed("baseline_draws", "an integer")?;
        pick(a.baseline_draws, k, &mut self.cfg.baseline_draws);
        Ok(())
    }

    pub fn grid(&mut self, a: &GridArgs) -> Result<(), CliError> {
        let f = self.file;
        pick(a.draws, f.parsed("draws", "a positive integer")?, &mut self.cfg.draws);
        if self.cfg.draws == 0 {
            return Err(CliError::Usage("draws must be at least 1".into()));
        }
        if let Some(r) = a.m_range.clone().or(f.text("m_range")) {
            self.cfg.m_range = parse_range(&r)?;
        }
        if let Some(r) = a.n_range.clone().or(f.text("n_range")) {
            self.cfg.n_range = parse_range(&r)?;
        }
        Ok(())
    }

    pub fn greedy(&mut self, a: &GreedyArgs) -> Result<(), CliError> {
        let f = self.file;
        let c = &mut self.cfg;
        pick_opt(a.mu.clone(), f.parsed("mu", "a path")?, &mut c.greedy_mu);
        pick_opt(a.sigma.clone(), f.parsed("sigma", "a path")?, &mut c.greedy_sigma);
        if let Some(s) = a.start.clone().or(f.text("start")) {
            c.greedy_start = Some(parse_cell(&s)?);
        }
        if let Some(s) = a.end.clone().or(f.text("end")) {
            c.greedy_end = Some(parse_cell(&s)?);
        }
        Ok(())
    }

    pub fn cluster(&mut self, from: Option<PathBuf>, a: &ClusterArgs) -> Result<(), CliError> {
        let f = self.file;
        let c = &mut self.cfg;
        pick_opt(from, f.parsed("from", "a path")?, &mut c.cluster_from);
        pick(a.k, f.parsed("k", "a positive integer")?, &mut c.cluster_k);
        if let Some(r) = a.cluster_m_range.clone().or(f.text("cluster_m_range")) {
            c.cluster_m_range = parse_range(&r)?;
        }
        if let Some(r) = a.cluster_n_range.clone().or(f.text("cluster_n_range")) {
            c.cluster_n_range = parse_range(&r)?;
        }
        if c.cluster_k == 0 {
            return Err(CliError::Usage("k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn dump_windows(&mut self, flag: bool) -> Result<(), CliError> {
        self.cfg.dump_windows = flag || self.file.flag("dump_windows")?;
        Ok(())
    }
}
