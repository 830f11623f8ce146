//! Distances between portfolio shapes and their average-linkage clustering.
//!
//! Two grid cells are as far apart as the mean absolute difference of their
//! median eigenvalue curves. Clustering is UPGMA: the distance between two
//! clusters is the unweighted mean over all cross pairs of items.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sampler::PercentileCurves;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("curves for ({a_m},{a_n}) and ({b_m},{b_n}) are on different date grids")]
    GridMismatch {
        a_m: usize,
        a_n: usize,
        b_m: usize,
        b_n: usize,
    },
    #[error("cannot cut {items} items into {k} clusters")]
    BadK { k: usize, items: usize },
    #[error("invalid distance matrix: {0}")]
    InvalidMatrix(String),
}

/// Mean over windows of `|p50_a(t) - p50_b(t)|`.
pub fn median_distance(a: &PercentileCurves, b: &PercentileCurves) -> Result<f64, ClusterError> {
    if a.dates != b.dates || a.p50.len() != b.p50.len() || a.p50.is_empty() {
        return Err(ClusterError::GridMismatch {
            a_m: a.m,
            a_n: a.n,
            b_m: b.m,
            b_n: b.n,
        });
    }
    let total: f64 = a.p50.iter().zip(&b.p50).map(|(x, y)| (x - y).abs()).sum();
    Ok(total / a.p50.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    items: Vec<(usize, usize)>,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    /// Checks symmetry (to 1e-12), a zero diagonal and non-negativity, then
    /// symmetrises exactly.
    pub fn new(items: Vec<(usize, usize)>, mut entries: Vec<f64>) -> Result<Self, ClusterError> {
        let k = items.len();
        let bad = |s: String| ClusterError::InvalidMatrix(s);
        if entries.len() != k * k {
            return Err(bad(format!("{} entries for {k} items", entries.len())));
        }
        for i in 0..k {
            if entries[i * k + i] != 0.0 {
                return Err(bad(format!("non-zero diagonal at {i}")));
            }
            for j in i + 1..k {
                let (x, y) = (entries[i * k + j], entries[j * k + i]);
                if !(x >= 0.0 && y >= 0.0) || !x.is_finite() || !y.is_finite() {
                    return Err(bad(format!("entry ({i},{j}) is {x}")));
                }
                if (x - y).abs() > SYMMETRY_TOL {
                    return Err(bad(format!("asymmetric at ({i},{j})")));
                }
                entries[j * k + i] = x;
            }
        }
        Ok(Self { items, entries })
    }

    pub fn items(&self) -> &[(usize, usize)] {
        &self.items
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.len() + j]
    }

    /// Square CSV with `m_n` labels on both axes.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let labels: Vec<String> = self.items.iter().map(|(m, n)| format!("{m}_{n}")).collect();
        let mut header = vec!["cell".to_string()];
        header.extend(labels.iter().cloned());
        out.write_record(&header)?;
        for (i, label) in labels.iter().enumerate() {
            let mut row = vec![label.clone()];
            row.extend((0..self.len()).map(|j| self.get(i, j).to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Pairwise [`median_distance`] between cells, in the given order.
pub fn distance_matrix(curves: &[PercentileCurves]) -> Result<DistanceMatrix, ClusterError> {
    let k = curves.len();
    let rows = (0..k)
        .into_par_iter()
        .map(|i| {
            (0..k)
                .map(|j| {
                    if i == j {
                        Ok(0.0)
                    } else {
                        // Always (low, high) so both halves are bit-identical.
                        median_distance(&curves[i.min(j)], &curves[i.max(j)])
                    }
                })
                .collect::<Result<Vec<f64>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    DistanceMatrix::new(
        curves.iter().map(|c| (c.m, c.n)).collect(),
        rows.into_iter().flatten().collect(),
    )
}

/// One agglomeration step. Leaves are `0..K`; the node created by merge `i`
/// has id `K + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    /// Number of leaves under the new node.
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n_items: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dendrogram serialises")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    /// `child_a,child_b,height`
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["child_a", "child_b", "height"])?;
        for m in &self.merges {
            out.write_record([m.a.to_string(), m.b.to_string(), m.height.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// UPGMA via the Lance-Williams update. The closest pair of active clusters is
/// merged first; equal distances go to the lexicographically smallest
/// `(lower id, higher id)` pair.
pub fn average_linkage(dm: &DistanceMatrix) -> Dendrogram {
    let k = dm.len();
    // Slot s holds the cluster with id ids[s]; a merge reuses the lower slot.
    let mut dist = dm.entries.clone();
    let mut ids: Vec<usize> = (0..k).collect();
    let mut sizes = vec![1usize; k];
    let mut active = vec![true; k];
    let mut merges = Vec::with_capacity(k.saturating_sub(1));

    for step in 0..k.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for s in (0..k).filter(|&s| active[s]) {
            for t in (s + 1..k).filter(|&t| active[t]) {
                let d = dist[s * k + t];
                let key = (ids[s].min(ids[t]), ids[s].max(ids[t]));
                let better = match best {
                    None => true,
                    Some((bd, _, _, lo, hi)) => d < bd || (d == bd && key < (lo, hi)),
                };
                if better {
                    best = Some((d, s, t, key.0, key.1));
                }
            }
        }
        let (height, s, t, lo, hi) = best.expect("at least two active clusters");
        let (ns, nt) = (sizes[s] as f64, sizes[t] as f64);
        for u in (0..k).filter(|&u| active[u] && u != s && u != t) {
            let d = (ns * dist[s * k + u] + nt * dist[t * k + u]) / (ns + nt);
            dist[s * k + u] = d;
            dist[u * k + s] = d;
        }
        active[t] = false;
        sizes[s] += sizes[t];
        ids[s] = k + step;
        merges.push(Merge {
            a: lo,
            b: hi,
            height,
            size: sizes[s],
        });
    }
    Dendrogram { n_items: k, merges }
}

/// Undoes the last `k - 1` merges. Cluster labels are numbered by first
/// appearance in item order.
pub fn cut_clusters(d: &Dendrogram, k: usize) -> Result<Vec<usize>, ClusterError> {
    let items = d.n_items;
    if k == 0 || k > items || d.merges.len() + 1 < items {
        return Err(ClusterError::BadK { k, items });
    }
    // parent pointers over leaves and internal nodes
    let mut parent: Vec<usize> = (0..items + d.merges.len()).collect();
    for (i, m) in d.merges.iter().take(items - k).enumerate() {
        parent[m.a] = items + i;
        parent[m.b] = items + i;
    }
    let root = |mut x: usize| {
        while parent[x] != x {
            x = parent[x];
        }
        x
    };
    let mut labels_of_root = std::collections::HashMap::new();
    Ok((0..items)
        .map(|i| {
            let next = labels_of_root.len();
            *labels_of_root.entry(root(i)).or_insert(next)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn curve(m: usize, p50: Vec<f64>) -> PercentileCurves {
        let d0 = NaiveDate::from_ymd_opt(2021, 3, 1).unwrap();
        let dates = (0..p50.len())
            .map(|k| d0 + chrono::Days::new(k as u64))
            .collect();
        PercentileCurves {
            m,
            n: 2,
            dates,
            p05: p50.clone(),
            p95: p50.clone(),
            p50,
        }
    }

    #[test]
    fn distance_examples() {
        let a = curve(2, vec![0.4; 5]);
        let b = curve(3, vec![0.5; 5]);
        assert_eq!(median_distance(&a, &a).unwrap(), 0.0);
        assert!((median_distance(&a, &b).unwrap() - 0.1).abs() < 1e-15);
        assert!(matches!(
            median_distance(&a, &curve(4, vec![0.5; 4])),
            Err(ClusterError::GridMismatch { .. })
        ));

        let dm = distance_matrix(&[a, b]).unwrap();
        assert_eq!(dm.items(), &[(2, 2), (3, 2)]);
        assert_eq!(dm.get(0, 0), 0.0);
        assert_eq!(dm.get(0, 1), dm.get(1, 0));
    }

    #[test]
    fn forced_three_item_order() {
        let dm = DistanceMatrix::new(
            vec![(0, 0), (0, 1), (0, 2)],
            vec![0.0, 1.0, 10.0, 1.0, 0.0, 10.0, 10.0, 10.0, 0.0],
        )
        .unwrap();
        let d = average_linkage(&dm);
        assert_eq!(d.merges.len(), 2);
        assert_eq!((d.merges[0].a, d.merges[0].b, d.merges[0].height), (0, 1, 1.0));
        assert_eq!((d.merges[1].a, d.merges[1].b, d.merges[1].height), (2, 3, 10.0));
        assert_eq!(d.merges[1].size, 3);

        assert_eq!(cut_clusters(&d, 1).unwrap(), vec![0, 0, 0]);
        assert_eq!(cut_clusters(&d, 2).unwrap(), vec![0, 0, 1]);
        assert_eq!(cut_clusters(&d, 3).unwrap(), vec![0, 1, 2]);
        assert!(matches!(cut_clusters(&d, 0), Err(ClusterError::BadK { .. })));
        assert!(matches!(cut_clusters(&d, 4), Err(ClusterError::BadK { .. })));
    }

    #[test]
    fn ties_go_to_smallest_ids() {
        // all distances equal
        let mut e = vec![1.0; 16];
        for i in 0..4 {
            e[i * 4 + i] = 0.0;
        }
        let d = average_linkage(&DistanceMatrix::new(vec![(0, 0); 4], e).unwrap());
        let pairs: Vec<(usize, usize)> = d.merges.iter().map(|m| (m.a, m.b)).collect();
        assert_eq!(pairs, vec![(0, 1), (2, 3), (4, 5)]);
    }

    #[test]
    fn matrix_validation() {
        assert!(DistanceMatrix::new(vec![(0, 0); 2], vec![0.0, 1.0, 2.0, 0.0]).is_err());
        assert!(DistanceMatrix::new(vec![(0, 0); 2], vec![1.0, 1.0, 1.0, 0.0]).is_err());
        assert!(DistanceMatrix::new(vec![(0, 0); 2], vec![0.0, -1.0, -1.0, 0.0]).is_err());
    }

    #[test]
    fn serialisation() {
        let d = Dendrogram {
            n_items: 2,
            merges: vec![Merge {
                a: 0,
                b: 1,
                height: 0.5,
                size: 2,
            }],
        };
        assert_eq!(Dendrogram::from_json(&d.to_json()).unwrap(), d);
        let mut buf = vec![];
        d.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "child_a,child_b,height\n0,1,0.5\n");
    }
}
