//! Correlation matrices as weighted graphs, and the modularity of a fixed
//! (a-priori) partition of their vertices.
//!
//! `A_ij = |Psi_ij|`, `k_i = sum_j A_ij`, `e = sum_i k_i / 2` and
//!
//! ```text
//! Q = 1/(2e) * sum_m sum_{i,j in S_m} (A_ij - k_i k_j / (2e))
//! ```
//!
//! with the double sum over ordered pairs, `i = j` included. Self-loops
//! (`A_ii = 1`) are kept unless [`SelfLoops::Drop`] is requested.

use std::collections::HashMap;
use std::io::Write;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corr::{CorrError, CorrMatrix, RollingCorrelation};
use crate::ingest::{ReturnPanel, DATE_FORMAT};
use crate::sampler::percentile_sorted;
use crate::seed::rng_for;

const STREAM_BASELINE: u64 = 0xB45E;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("graph has zero total edge weight")]
    EmptyGraph,
    #[error("invalid adjacency matrix: {0}")]
    InvalidGraph(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("partition does not match graph labels: {0}")]
    PartitionMismatch(String),
    #[error("group sizes sum to {got}, expected {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("baseline needs at least one draw")]
    NoDraws,
    #[error(transparent)]
    Corr(#[from] CorrError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelfLoops {
    /// `A_ii = |Psi_ii| = 1`.
    #[default]
    Keep,
    /// `A_ii = 0`.
    Drop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    labels: Vec<String>,
    adjacency: Vec<f64>,
    degrees: Vec<f64>,
    total_weight: f64,
}

fn degrees_of(a: &[f64], n: usize) -> (Vec<f64>, f64) {
    let degrees: Vec<f64> = a.chunks_exact(n).map(|r| r.iter().sum()).collect();
    let total = 0.5 * degrees.iter().sum::<f64>();
    (degrees, total)
}

fn abs_adjacency(entries: &[f64], n: usize, loops: SelfLoops, out: &mut [f64]) {
    for (o, x) in out.iter_mut().zip(entries) {
        *o = x.abs();
    }
    if loops == SelfLoops::Drop {
        for i in 0..n {
            out[i * n + i] = 0.0;
        }
    }
}

impl WeightedGraph {
    /// Symmetric adjacency with weights in `[0, 1]`, row-major.
    pub fn from_adjacency(labels: Vec<String>, adjacency: Vec<f64>) -> Result<Self, NetError> {
        let n = labels.len();
        if adjacency.len() != n * n {
            return Err(NetError::InvalidGraph(format!(
                "{} entries for {n} vertices",
                adjacency.len()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let v = adjacency[i * n + j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(NetError::InvalidGraph(format!("A[{i}][{j}] = {v}")));
                }
                if v != adjacency[j * n + i] {
                    return Err(NetError::InvalidGraph(format!("asymmetric at ({i},{j})")));
                }
            }
        }
        let (degrees, total_weight) = degrees_of(&adjacency, n);
        Ok(Self {
            labels,
            adjacency,
            degrees,
            total_weight,
        })
    }

    pub fn from_correlation(m: &CorrMatrix, loops: SelfLoops) -> Self {
        let n = m.dim();
        let mut adjacency = vec![0.0; n * n];
        abs_adjacency(m.entries(), n, loops, &mut adjacency);
        let (degrees, total_weight) = degrees_of(&adjacency, n);
        Self {
            labels: m.labels().to_vec(),
            adjacency,
            degrees,
            total_weight,
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn adjacency(&self) -> &[f64] {
        &self.adjacency
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i * self.dim() + j]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// `e`, half the sum of all adjacency entries.
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }
}

/// `A_ij = |Psi_ij|` with self-loops kept.
pub fn adjacency_from_correlation(m: &CorrMatrix) -> WeightedGraph {
    WeightedGraph::from_correlation(m, SelfLoops::Keep)
}

/// Disjoint, non-empty groups of labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    groups: Vec<Vec<String>>,
}

impl Partition {
    pub fn new(groups: Vec<Vec<String>>) -> Result<Self, NetError> {
        let mut seen = HashMap::new();
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(NetError::InvalidPartition(format!("group {g} is empty")));
            }
            for m in members {
                if let Some(prev) = seen.insert(m.as_str(), g) {
                    return Err(NetError::InvalidPartition(format!(
                        "{m} is in groups {prev} and {g}"
                    )));
                }
            }
        }
        Ok(Self { groups })
    }

    /// The sector partition of a panel, sectors in lexicographic order.
    pub fn from_sectors(panel: &ReturnPanel) -> Self {
        let groups = panel
            .sector_members()
            .into_values()
            .map(|idx| idx.into_iter().map(|i| panel.tickers()[i].clone()).collect())
            .collect();
        Self { groups }
    }

    pub fn groups(&self) -> &[Vec<String>] {
        &self.groups
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    pub fn n_labels(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Group index of every label, failing unless the partition covers exactly
    /// `labels`.
    pub fn assignment(&self, labels: &[String]) -> Result<Vec<usize>, NetError> {
        let mut lookup = HashMap::with_capacity(labels.len());
        for (g, members) in self.groups.iter().enumerate() {
            for m in members {
                lookup.insert(m.as_str(), g);
            }
        }
        if lookup.len() != labels.len() {
            return Err(NetError::PartitionMismatch(format!(
                "partition has {} labels, graph has {}",
                lookup.len(),
                labels.len()
            )));
        }
        labels
            .iter()
            .map(|l| {
                lookup
                    .get(l.as_str())
                    .copied()
                    .ok_or_else(|| NetError::PartitionMismatch(format!("{l} is not in any group")))
            })
            .collect()
    }
}

/// Modularity from raw parts; `assign[i] < n_groups`.
pub(crate) fn modularity_raw(
    a: &[f64],
    n: usize,
    degrees: &[f64],
    total_weight: f64,
    assign: &[usize],
    n_groups: usize,
) -> Result<f64, NetError> {
    if total_weight <= 0.0 {
        return Err(NetError::EmptyGraph);
    }
    let two_e = 2.0 * total_weight;
    let mut internal = vec![0.0; n_groups];
    let mut degree_sum = vec![0.0; n_groups];
    for (i, row) in a.chunks_exact(n).enumerate() {
        let gi = assign[i];
        degree_sum[gi] += degrees[i];
        internal[gi] += row
            .iter()
            .zip(assign)
            .filter(|(_, &gj)| gj == gi)
            .map(|(x, _)| x)
            .sum::<f64>();
    }
    let q: f64 = internal
        .iter()
        .zip(&degree_sum)
        .map(|(w, k)| w - k * k / two_e)
        .sum();
    Ok(q / two_e)
}

pub fn modularity(g: &WeightedGraph, p: &Partition) -> Result<f64, NetError> {
    let assign = p.assignment(&g.labels)?;
    modularity_raw(
        &g.adjacency,
        g.dim(),
        &g.degrees,
        g.total_weight,
        &assign,
        p.groups.len(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModularitySeries {
    pub end_indices: Vec<usize>,
    pub dates: Vec<NaiveDate>,
    pub q: Vec<f64>,
}

impl ModularitySeries {
    /// `date,Q`
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["date", "Q"])?;
        for (d, q) in self.dates.iter().zip(&self.q) {
            out.write_record([d.format(DATE_FORMAT).to_string(), q.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn partition_subset(panel: &ReturnPanel, p: &Partition) -> Result<Vec<usize>, NetError> {
    let mut idx = Vec::with_capacity(p.n_labels());
    for members in p.groups() {
        for m in members {
            idx.push(panel.index_of(m).ok_or_else(|| {
                NetError::PartitionMismatch(format!("{m} is not a panel ticker"))
            })?);
        }
    }
    idx.sort_unstable();
    Ok(idx)
}

/// `Q(t)` of a fixed partition over every window `t = tau ..= T`. The graph
/// spans exactly the tickers named in the partition.
pub fn modularity_series(
    panel: &ReturnPanel,
    tau: usize,
    p: &Partition,
    loops: SelfLoops,
) -> Result<ModularitySeries, NetError> {
    let subset = partition_subset(panel, p)?;
    let labels: Vec<String> = subset.iter().map(|&i| panel.tickers()[i].clone()).collect();
    let assign = p.assignment(&labels)?;
    let n = subset.len();
    let mut rolling = RollingCorrelation::new(panel, tau, &subset)?;
    let mut adjacency = vec![0.0; n * n];
    let mut out = ModularitySeries {
        end_indices: Vec::with_capacity(rolling.remaining()),
        dates: Vec::with_capacity(rolling.remaining()),
        q: Vec::with_capacity(rolling.remaining()),
    };
    while let Some(step) = rolling.advance() {
        let (end, entries) = step?;
        abs_adjacency(entries, n, loops, &mut adjacency);
        let (degrees, e) = degrees_of(&adjacency, n);
        let q = modularity_raw(&adjacency, n, &degrees, e, &assign, p.groups.len())?;
        out.end_indices.push(end);
        out.dates.push(panel.dates()[end - 1]);
        out.q.push(q);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub end_indices: Vec<usize>,
    pub dates: Vec<NaiveDate>,
    pub mean: Vec<f64>,
    pub p05: Vec<f64>,
    pub p95: Vec<f64>,
    /// `draws[k][w]`: modularity of random allocation `k` in window `w`.
    pub draws: Vec<Vec<f64>>,
}

impl BaselineResult {
    /// `date,Q_random_mean,Q_random_p05,Q_random_p95`
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["date", "Q_random_mean", "Q_random_p05", "Q_random_p95"])?;
        for k in 0..self.dates.len() {
            out.write_record([
                self.dates[k].format(DATE_FORMAT).to_string(),
                self.mean[k].to_string(),
                self.p05[k].to_string(),
                self.p95[k].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Random allocation number `draw` of `n` labels into groups of `sizes`.
pub fn random_allocation(sizes: &[usize], seed: u64, draw: u64) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, &[STREAM_BASELINE, draw]));
    let mut assign = vec![0; n];
    let mut pos = 0;
    for (g, &s) in sizes.iter().enumerate() {
        for &v in &order[pos..pos + s] {
            assign[v] = g;
        }
        pos += s;
    }
    assign
}

/// Modularity of `k` seeded random allocations of all panel tickers into
/// groups with the given size profile, window by window.
pub fn random_partition_baseline(
    panel: &ReturnPanel,
    tau: usize,
    sizes: &[usize],
    k: usize,
    seed: u64,
    loops: SelfLoops,
) -> Result<BaselineResult, NetError> {
    let n = panel.n_tickers();
    let total: usize = sizes.iter().sum();
    if total != n {
        return Err(NetError::SizeMismatch {
            expected: n,
            got: total,
        });
    }
    if sizes.contains(&0) {
        return Err(NetError::InvalidPartition("group size 0".into()));
    }
    if k == 0 {
        return Err(NetError::NoDraws);
    }
    let allocations: Vec<Vec<usize>> = (0..k)
        .map(|d| random_allocation(sizes, seed, d as u64))
        .collect();
    let subset: Vec<usize> = (0..n).collect();
    let mut rolling = RollingCorrelation::new(panel, tau, &subset)?;
    let windows = rolling.remaining();
    let mut draws = vec![Vec::with_capacity(windows); k];
    let mut end_indices = Vec::with_capacity(windows);
    let mut adjacency = vec![0.0; n * n];
    while let Some(step) = rolling.advance() {
        let (end, entries) = step?;
        abs_adjacency(entries, n, loops, &mut adjacency);
        let (degrees, e) = degrees_of(&adjacency, n);
        let qs = allocations
            .par_iter()
            .map(|assign| modularity_raw(&adjacency, n, &degrees, e, assign, sizes.len()))
            .collect::<Result<Vec<f64>, NetError>>()?;
        for (d, q) in draws.iter_mut().zip(qs) {
            d.push(q);
        }
        end_indices.push(end);
    }

    let mut mean = Vec::with_capacity(windows);
    let mut p05 = Vec::with_capacity(windows);
    let mut p95 = Vec::with_capacity(windows);
    let mut column = vec![0.0; k];
    for w in 0..end_indices.len() {
        for (c, d) in column.iter_mut().zip(&draws) {
            *c = d[w];
        }
        mean.push(column.iter().sum::<f64>() / k as f64);
        column.sort_by(f64::total_cmp);
        p05.push(percentile_sorted(&column, 0.05));
        p95.push(percentile_sorted(&column, 0.95));
    }
    Ok(BaselineResult {
        dates: end_indices.iter().map(|&t| panel.dates()[t - 1]).collect(),
        end_indices,
        mean,
        p05,
        p95,
        draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("v{i}")).collect()
    }

    fn groups(spec: &[&[usize]]) -> Partition {
        Partition::new(
            spec.iter()
                .map(|g| g.iter().map(|i| format!("v{i}")).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn adjacency_of_negative_correlation() {
        let m = CorrMatrix::from_entries(labels(2), 0, vec![1.0, -0.5, -0.5, 1.0]).unwrap();
        let g = adjacency_from_correlation(&m);
        assert_eq!(g.adjacency(), &[1.0, 0.5, 0.5, 1.0]);
        assert_eq!(g.degrees(), &[1.5, 1.5]);
        assert_eq!(g.total_weight(), 1.5);

        let g = WeightedGraph::from_correlation(&m, SelfLoops::Drop);
        assert_eq!(g.adjacency(), &[0.0, 0.5, 0.5, 0.0]);
        assert_eq!(g.total_weight(), 0.5);
    }

    #[test]
    fn identity_correlation_graph() {
        let mut id = vec![0.0; 9];
        for i in 0..3 {
            id[i * 3 + i] = 1.0;
        }
        let g = adjacency_from_correlation(&CorrMatrix::from_entries(labels(3), 0, id).unwrap());
        assert_eq!(g.degrees(), &[1.0, 1.0, 1.0]);
        assert_eq!(g.total_weight(), 1.5);
    }

    #[test]
    fn two_disconnected_blocks() {
        let a = vec![
            1.0, 1.0, 0.0, 0.0, //
            1.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 1.0, //
            0.0, 0.0, 1.0, 1.0,
        ];
        let g = WeightedGraph::from_adjacency(labels(4), a).unwrap();
        assert_eq!(g.total_weight(), 4.0);
        let q = modularity(&g, &groups(&[&[0, 1], &[2, 3]])).unwrap();
        assert!((q - 0.5).abs() < 1e-15);
        let q = modularity(&g, &groups(&[&[0, 1, 2, 3]])).unwrap();
        assert!(q.abs() < 1e-15);
    }

    #[test]
    fn empty_graph_is_an_error() {
        let g = WeightedGraph::from_adjacency(labels(2), vec![0.0; 4]).unwrap();
        assert_eq!(
            modularity(&g, &groups(&[&[0], &[1]])),
            Err(NetError::EmptyGraph)
        );
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![vec!["a".into()], vec![]]).is_err());
        assert!(Partition::new(vec![vec!["a".into()], vec!["a".into()]]).is_err());
        let p = groups(&[&[0], &[1]]);
        assert!(matches!(
            p.assignment(&labels(3)),
            Err(NetError::PartitionMismatch(_))
        ));
        assert!(matches!(
            p.assignment(&["v0".to_string(), "x".to_string()]),
            Err(NetError::PartitionMismatch(_))
        ));
    }

    #[test]
    fn allocation_respects_sizes() {
        let a = random_allocation(&[3, 1, 2], 9, 4);
        let mut counts = [0; 3];
        for g in &a {
            counts[*g] += 1;
        }
        assert_eq!(counts, [3, 1, 2]);
        assert_eq!(a, random_allocation(&[3, 1, 2], 9, 4));
    }
}
