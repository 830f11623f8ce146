use std::collections::BTreeSet;
use std::path::Path;

use marketmode::ingest::log_returns;
use marketmode::sampler::SkippedCell;
use marketmode::{
    average_linkage, collectivity_series, correlation_series, cut_clusters, distance_matrix,
    generate_degenerate_market, generate_factor_market, greedy_path, load_price_panel,
    modularity_series, random_partition_baseline, sample_grid, CleaningPolicy, DegenerateKind,
    Dendrogram, EigenOptions, GridConfig, GridTable, Partition, PercentileCurves, PricePanel,
    Removal, ReturnPanel, SamplingResult, Scope, SelfLoops, SynthConfig,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Ctx};
use crate::output::{file_stem, RunDir};

pub fn synth_prices(cfg: &RunConfig) -> Result<PricePanel, CliError> {
    let s = &cfg.synth;
    if let Some(kind) = &s.degenerate {
        let kind: DegenerateKind = kind.parse()?;
        return Ok(generate_degenerate_market(kind, s.degenerate_n, s.t, cfg.seed)?);
    }
    let sizes = s
        .sizes
        .clone()
        .unwrap_or_else(|| vec![s.per_sector; s.n_sectors]);
    let config = SynthConfig {
        n_sectors: sizes.len(),
        equities_per_sector: sizes,
        t: s.t,
        beta_market: s.beta_market,
        beta_sector: s.beta_sector,
        sigma_idio: s.sigma_idio,
        seed: cfg.seed,
    };
    Ok(generate_factor_market(&config)?)
}

fn write_prices(run: &mut RunDir, prices: &PricePanel) -> Result<(), CliError> {
    run.write("prices.csv", |b| prices.write_prices_csv(b))?;
    run.write("sectors.csv", |b| prices.write_sectors_csv(b))
}

pub fn load_panel(cfg: &RunConfig) -> Result<(ReturnPanel, Vec<Removal>), CliError> {
    let (Some(prices), Some(sectors)) = (&cfg.prices, &cfg.sectors) else {
        return Err(CliError::Usage(
            "--prices and --sectors are both required".into(),
        ));
    };
    let policy = CleaningPolicy {
        gap_limit: cfg.gap_limit,
        drop_fraction: cfg.drop_fraction,
        strict: cfg.strict,
    };
    let (panel, removals) = load_price_panel(prices, sectors, &policy)?;
    Ok((log_returns(&panel), removals))
}

pub fn check_tau(panel: &ReturnPanel, tau: usize) -> Result<(), CliError> {
    if tau > panel.len() {
        return Err(CliError::Usage(format!(
            "tau = {tau} exceeds the {} return observations available",
            panel.len()
        )));
    }
    Ok(())
}

pub fn synth(run: &mut RunDir, cfg: &RunConfig) -> Result<(), CliError> {
    write_prices(run, &synth_prices(cfg)?)
}

pub fn collectivity(run: &mut RunDir, cfg: &RunConfig, panel: &ReturnPanel) -> Result<(), CliError> {
    check_tau(panel, cfg.tau)?;
    let ctx = Ctx(Some(panel));
    let mut scopes = vec![Scope::market(panel)];
    scopes.extend(Scope::sectors(panel));
    let mut stems = BTreeSet::new();
    for s in &scopes {
        if !stems.insert(file_stem(&s.name)) {
            return Err(CliError::Data(format!(
                "scope {:?} clashes with another scope's file name",
                s.name
            )));
        }
    }
    let series = collectivity_series(panel, cfg.tau, &scopes, &EigenOptions::default())
        .map_err(|e| ctx.spectral(e))?;
    for s in &series {
        let rel = format!("collectivity/{}.csv", file_stem(&s.scope));
        run.write(&rel, |b| s.write_csv(b))?;
    }
    if cfg.dump_windows {
        for scope in &scopes {
            for m in correlation_series(panel, cfg.tau, &scope.members).map_err(|e| ctx.corr(e))? {
                let m = m.map_err(|e| ctx.corr(e))?;
                let rel = format!(
                    "windows/{}/{}.csv",
                    file_stem(&scope.name),
                    panel.dates()[m.end_index() - 1]
                );
                run.write(&rel, |b| m.write_csv(b))?;
            }
        }
    }
    Ok(())
}

pub fn modularity(run: &mut RunDir, cfg: &RunConfig, panel: &ReturnPanel) -> Result<(), CliError> {
    check_tau(panel, cfg.tau)?;
    let ctx = Ctx(Some(panel));
    let loops = if cfg.zero_diagonal {
        SelfLoops::Drop
    } else {
        SelfLoops::Keep
    };
    let partition = Partition::from_sectors(panel);
    let q = modularity_series(panel, cfg.tau, &partition, loops).map_err(|e| ctx.net(e))?;
    run.write("modularity.csv", |b| q.write_csv(b))?;
    if cfg.baseline_draws > 0 {
        let base = random_partition_baseline(
            panel,
            cfg.tau,
            &partition.sizes(),
            cfg.baseline_draws,
            cfg.seed,
            loops,
        )
        .map_err(|e| ctx.net(e))?;
        run.write("modularity_baseline.csv", |b| base.write_csv(b))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct PathStep {
    m: usize,
    n: usize,
    mu: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
}

#[derive(Debug, Serialize)]
struct GreedyOut {
    start: [usize; 2],
    end: [usize; 2],
    path: Vec<PathStep>,
}

fn write_greedy(
    run: &mut RunDir,
    mu: &GridTable,
    sigma: Option<&GridTable>,
    start: [usize; 2],
    end: [usize; 2],
) -> Result<(), CliError> {
    let path = greedy_path(mu, (start[0], start[1]), (end[0], end[1]))
        .map_err(|e| Ctx(None).sampler(e))?;
    let out = GreedyOut {
        start,
        end,
        path: path
            .into_iter()
            .map(|(m, n)| PathStep {
                m,
                n,
                mu: mu.get(m, n).expect("path stays in the table"),
                sigma: sigma.and_then(|s| s.get(m, n)),
            })
            .collect(),
    };
    run.write_json("greedy_path.json", &out)
}

fn grid_corners(t: &GridTable) -> ([usize; 2], [usize; 2]) {
    let (m, n) = (t.m_values(), t.n_values());
    ([m[0], n[0]], [*m.last().unwrap(), *n.last().unwrap()])
}

pub fn sample(
    run: &mut RunDir,
    cfg: &RunConfig,
    panel: &ReturnPanel,
) -> Result<SamplingResult, CliError> {
    check_tau(panel, cfg.tau)?;
    let grid = GridConfig {
        m_range: cfg.m_range[0]..=cfg.m_range[1],
        n_range: cfg.n_range[0]..=cfg.n_range[1],
        draws: cfg.draws,
        master_seed: cfg.seed,
    };
    let result = sample_grid(panel, cfg.tau, &grid, &EigenOptions::default())
        .map_err(|e| Ctx(Some(panel)).sampler(e))?;
    run.write("mu_table.csv", |b| result.summary.mu.write_csv(b))?;
    run.write("sigma_table.csv", |b| result.summary.sigma.write_csv(b))?;
    for c in &result.curves {
        run.write(&format!("curves/{}_{}.csv", c.m, c.n), |b| c.write_csv(b))?;
    }
    run.write_json::<Vec<SkippedCell>>("skipped_cells.json", &result.skipped)?;
    for s in &result.skipped {
        eprintln!("warning: skipped cell ({},{}): {}", s.m, s.n, s.reason);
    }
    let (start, end) = grid_corners(&result.summary.mu);
    if result.skipped.is_empty() {
        write_greedy(run, &result.summary.mu, Some(&result.summary.sigma), start, end)?;
    } else {
        eprintln!("warning: grid has skipped cells, no greedy path written");
    }
    Ok(result)
}

fn read_table(path: &Path) -> Result<GridTable, CliError> {
    let f = std::fs::File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    GridTable::read_csv(f).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn greedy(run: &mut RunDir, cfg: &RunConfig) -> Result<(), CliError> {
    let mu_path = cfg
        .greedy_mu
        .as_ref()
        .ok_or_else(|| CliError::Usage("--mu is required".into()))?;
    let mu = read_table(mu_path)?;
    let sigma = cfg.greedy_sigma.as_deref().map(read_table).transpose()?;
    let (start, end) = grid_corners(&mu);
    write_greedy(
        run,
        &mu,
        sigma.as_ref(),
        cfg.greedy_start.unwrap_or(start),
        cfg.greedy_end.unwrap_or(end),
    )
}

#[derive(Serialize)]
struct DendrogramOut<'a> {
    items: Vec<String>,
    #[serde(flatten)]
    dendrogram: &'a Dendrogram,
}

fn in_range(r: [usize; 2], v: usize) -> bool {
    r[0] <= v && v <= r[1]
}

/// Clusters the curves that fall inside the configured cluster ranges.
pub fn cluster(run: &mut RunDir, cfg: &RunConfig, curves: &[PercentileCurves]) -> Result<(), CliError> {
    let picked: Vec<PercentileCurves> = curves
        .iter()
        .filter(|c| in_range(cfg.cluster_m_range, c.m) && in_range(cfg.cluster_n_range, c.n))
        .cloned()
        .collect();
    if picked.is_empty() {
        return Err(CliError::Usage(format!(
            "no sampled cells inside m {:?} x n {:?}",
            cfg.cluster_m_range, cfg.cluster_n_range
        )));
    }
    let dm = distance_matrix(&picked)?;
    let dendrogram = average_linkage(&dm);
    let labels = cut_clusters(&dendrogram, cfg.cluster_k)?;
    run.write("distance_matrix.csv", |b| dm.write_csv(b))?;
    let items: Vec<String> = dm.items().iter().map(|(m, n)| format!("{m}_{n}")).collect();
    run.write_json(
        "dendrogram.json",
        &DendrogramOut {
            items,
            dendrogram: &dendrogram,
        },
    )?;
    run.write("dendrogram.csv", |b| dendrogram.write_csv(b))?;
    run.write(&format!("clusters_k{}.csv", cfg.cluster_k), |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["m", "n", "cluster"])?;
        for ((m, n), l) in dm.items().iter().zip(&labels) {
            w.write_record([m.to_string(), n.to_string(), l.to_string()])?;
        }
        w.flush()?;
        Ok::<_, csv::Error>(())
    })
}

/// Reads `curves/<m>_<n>.csv` for every cell of the cluster ranges that the
/// sampling run produced.
pub fn read_curves(dir: &Path, cfg: &RunConfig) -> Result<Vec<PercentileCurves>, CliError> {
    let mut out = vec![];
    let mut missing = vec![];
    for m in cfg.cluster_m_range[0]..=cfg.cluster_m_range[1] {
        for n in cfg.cluster_n_range[0]..=cfg.cluster_n_range[1] {
            let path = dir.join("curves").join(format!("{m}_{n}.csv"));
            match std::fs::File::open(&path) {
                Ok(f) => out.push(
                    PercentileCurves::read_csv(m, n, f)
                        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
                ),
                Err(_) => missing.push(format!("({m},{n})")),
            }
        }
    }
    if !missing.is_empty() {
        eprintln!("warning: no curves for {}", missing.join(" "));
    }
    Ok(out)
}

pub fn pipeline(run: &mut RunDir, cfg: &RunConfig) -> Result<(), CliError> {
    let (panel, removals) = if cfg.prices.is_some() || cfg.sectors.is_some() {
        load_panel(cfg)?
    } else {
        let prices = synth_prices(cfg)?;
        write_prices(run, &prices)?;
        (log_returns(&prices), vec![])
    };
    run.write_json("removals.json", &removals)?;
    collectivity(run, cfg, &panel)?;
    modularity(run, cfg, &panel)?;
    let sampled = sample(run, cfg, &panel)?;
    cluster(run, cfg, &sampled.curves)
}
