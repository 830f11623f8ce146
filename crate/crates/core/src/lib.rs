//! Collective-behaviour diagnostics for equity markets.
//!
//! The crate turns a panel of daily close prices into rolling cross-correlation
//! matrices and reads three collectivity measures off them: the normalised
//! leading eigenvalue, the uniformity of the leading eigenvector and the
//! modularity of the sector partition. On top of that it samples
//! `(m sectors, n equities per sector)` portfolios to measure how much
//! diversification each portfolio shape buys, and clusters the shapes by the
//! distance between their median eigenvalue curves.
//!
//! Module map:
//!
//! * [`ingest`]: price/sector CSV loading, cleaning, log returns
//! * [`synth`]: seeded factor-model and degenerate markets
//! * [`corr`]: windowed and rolling Pearson correlation matrices
//! * [`spectral`]: leading eigenpair, uniformity, collectivity series
//! * [`netdiag`]: correlation graphs, modularity, random-partition baseline
//! * [`sampler`]: portfolio draws, percentile curves, grid tables, greedy path
//! * [`cluster`]: curve distances, average linkage, dendrogram cuts

pub mod cluster;
pub mod corr;
pub mod ingest;
pub mod netdiag;
pub mod sampler;
pub mod seed;
pub mod spectral;
pub mod synth;

pub use cluster::{
    average_linkage, cut_clusters, distance_matrix, median_distance, ClusterError, Dendrogram,
    DistanceMatrix, Merge,
};
pub use corr::{
    correlation_series, window_correlation, CorrError, CorrMatrix, RollingCorrelation, WindowSpec,
};
pub use ingest::{
    align_and_clean, load_price_panel, log_returns, CleaningPolicy, IngestError, PricePanel,
    RawPanel, Removal, ReturnPanel,
};
pub use netdiag::{
    adjacency_from_correlation, modularity, modularity_series, random_partition_baseline,
    BaselineResult, ModularitySeries, NetError, Partition, SelfLoops, WeightedGraph,
};
pub use sampler::{
    draw_portfolio, greedy_path, percentile, portfolio_lambda_series, sample_grid, GridConfig,
    GridSummary, GridTable, PercentileCurves, PortfolioSpec, SamplerError, SamplingResult,
    SectorMap, SeedLineage, SkippedCell,
};
pub use spectral::{
    collectivity_series, leading_eigenpair, uniformity, CollectivitySeries, EigenOptions,
    EigenResult, Scope, Solver, SpectralError,
};
pub use synth::{
    generate_degenerate_market, generate_factor_market, DegenerateKind, SynthConfig, SynthError,
};

/// Default rolling window length in trading days.
pub const DEFAULT_TAU: usize = 120;

/// Default number of portfolio draws per grid cell.
pub const DEFAULT_DRAWS: usize = 500;
