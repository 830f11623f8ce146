use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Collectivity and diversification analysis of equity price panels.
#[derive(Debug, Parser)]
#[command(name = "marketmode", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads (0 = one per core). Never affects results.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// TOML file of `key = value` settings; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Run directory for all outputs.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Generate a seeded synthetic market (prices.csv, sectors.csv).
    Synth {
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        seed: SeedArgs,
    },
    /// Normalised leading eigenvalue and uniformity per scope.
    Collectivity {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        window: WindowArgs,
        /// Also write every window's correlation matrix (large).
        #[arg(long)]
        dump_windows: bool,
    },
    /// Sector modularity and the random-partition baseline.
    Modularity {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        seed: SeedArgs,
    },
    /// Monte-Carlo portfolio sampling over the (m, n) grid.
    Sample {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        seed: SeedArgs,
    },
    /// Greedy size-growth path through a mean table.
    Greedy {
        #[command(flatten)]
        greedy: GreedyArgs,
    },
    /// Distance matrix and average-linkage clustering of sampled cells.
    Cluster {
        /// Directory written by `sample` (reads curves/<m>_<n>.csv).
        #[arg(long)]
        from: Option<PathBuf>,
        #[command(flatten)]
        cluster: ClusterArgs,
    },
    /// Every stage in order with one shared seed.
    Pipeline {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        cluster: ClusterArgs,
        #[command(flatten)]
        seed: SeedArgs,
        #[arg(long)]
        dump_windows: bool,
    },
}

#[derive(Debug, Args, Default)]
pub struct SeedArgs {
    /// Master seed for every random stream.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Default)]
pub struct InputArgs {
    /// `date,TICK1,TICK2,...` close prices.
    #[arg(long)]
    pub prices: Option<PathBuf>,
    /// `ticker,sector` map.
    #[arg(long)]
    pub sectors: Option<PathBuf>,
    /// Longest gap (trading days) that is forward-filled.
    #[arg(long)]
    pub gap_limit: Option<usize>,
    /// Drop tickers missing more than this fraction of dates.
    #[arg(long)]
    pub drop_fraction: Option<f64>,
    /// Fail instead of dropping tickers.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args, Default)]
pub struct WindowArgs {
    /// Rolling window length in trading days.
    #[arg(long)]
    pub tau: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct SynthArgs {
    #[arg(long)]
    pub n_sectors: Option<usize>,
    /// Equities in every sector.
    #[arg(long)]
    pub per_sector: Option<usize>,
    /// Comma-separated sector sizes; overrides the two flags above.
    #[arg(long)]
    pub sizes: Option<String>,
    /// Number of return observations.
    #[arg(long = "t")]
    pub t: Option<usize>,
    #[arg(long)]
    pub beta_market: Option<f64>,
    #[arg(long)]
    pub beta_sector: Option<f64>,
    #[arg(long)]
    pub sigma_idio: Option<f64>,
    /// identical | independent | anti
    #[arg(long)]
    pub degenerate: Option<String>,
    /// Series count for a degenerate market.
    #[arg(long)]
    pub degenerate_n: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct NetArgs {
    /// Exclude self-loops from the correlation graph.
    #[arg(long)]
    pub zero_diagonal: bool,
    /// Random allocations in the modularity baseline.
    #[arg(long)]
    pub baseline_draws: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct GridArgs {
    /// Portfolios drawn per grid cell.
    #[arg(long)]
    pub draws: Option<usize>,
    /// Sector counts, `lo:hi` inclusive.
    #[arg(long)]
    pub m_range: Option<String>,
    /// Equities per sector, `lo:hi` inclusive.
    #[arg(long)]
    pub n_range: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct GreedyArgs {
    /// Mean table (`mu_table.csv` layout).
    #[arg(long)]
    pub mu: Option<PathBuf>,
    /// Optional spread table to report along the path.
    #[arg(long)]
    pub sigma: Option<PathBuf>,
    /// Start cell `m,n`; defaults to the table's first cell.
    #[arg(long)]
    pub start: Option<String>,
    /// End cell `m,n`; defaults to the table's last cell.
    #[arg(long)]
    pub end: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct ClusterArgs {
    /// Cluster count for the flat cut.
    #[arg(long)]
    pub k: Option<usize>,
    /// Sector counts to cluster, `lo:hi`.
    #[arg(long)]
    pub cluster_m_range: Option<String>,
    /// Equities per sector to cluster, `lo:hi`.
    #[arg(long)]
    pub cluster_n_range: Option<String>,
}
