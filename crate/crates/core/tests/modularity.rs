mod common;

use marketmode::ingest::log_returns;
use marketmode::netdiag::random_allocation;
use marketmode::seed::rng_for;
use marketmode::{
    adjacency_from_correlation, generate_factor_market, modularity, modularity_series,
    random_partition_baseline, CorrMatrix, Partition, SelfLoops, SynthConfig, WeightedGraph,
};
use proptest::prelude::*;
use rand::Rng;

/// Literal double sum over ordered vertex pairs in the same group.
fn brute_q(a: &[f64], n: usize, groups: &[usize]) -> f64 {
    let k: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a[i * n + j]).sum()).collect();
    let mut two_e = 0.0;
    for x in a {
        two_e += x;
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if groups[i] == groups[j] {
                q += a[i * n + j] - k[i] * k[j] / two_e;
            }
        }
    }
    q / two_e
}

fn random_graph(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = rng_for(seed, &[1]);
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let w = if rng.random_bool(0.3) { 0.0 } else { rng.random::<f64>() };
            a[i * n + j] = w;
            a[j * n + i] = w;
        }
    }
    a[0] = a[0].max(0.5);
    a
}

fn partition_of(labels: &[String], groups: &[usize]) -> Partition {
    let n_groups = groups.iter().max().unwrap() + 1;
    let mut out = vec![vec![]; n_groups];
    for (l, &g) in labels.iter().zip(groups) {
        out[g].push(l.clone());
    }
    Partition::new(out.into_iter().filter(|g| !g.is_empty()).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_brute_force(seed in any::<u64>(), n in 1usize..=8, n_groups in 1usize..=4, shift in 0usize..8) {
        let a = random_graph(seed, n);
        let labels = common::labels(n);
        let g = WeightedGraph::from_adjacency(labels.clone(), a.clone()).unwrap();
        let mut rng = rng_for(seed, &[2]);
        let groups: Vec<usize> = (0..n).map(|_| rng.random_range(0..n_groups)).collect();
        let q = modularity(&g, &partition_of(&labels, &groups)).unwrap();
        prop_assert!((q - brute_q(&a, n, &groups)).abs() <= 1e-12);
        prop_assert!((-1.0..=1.0).contains(&q));

        let single = modularity(&g, &partition_of(&labels, &vec![0; n])).unwrap();
        prop_assert!(single.abs() <= 1e-12);

        // relabel groups
        let relabelled: Vec<usize> = groups.iter().map(|g| n_groups - 1 - g).collect();
        let q2 = modularity(&g, &partition_of(&labels, &relabelled)).unwrap();
        prop_assert!((q - q2).abs() <= 1e-12);

        // permute vertices together with their groups
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let pa: Vec<f64> = (0..n * n).map(|k| a[perm[k / n] * n + perm[k % n]]).collect();
        let pl: Vec<String> = perm.iter().map(|&i| labels[i].clone()).collect();
        let pg = WeightedGraph::from_adjacency(pl.clone(), pa).unwrap();
        let q3 = modularity(&pg, &partition_of(&labels, &groups)).unwrap();
        prop_assert!((q - q3).abs() <= 1e-12);
    }

    #[test]
    fn adjacency_matches_naive(seed in any::<u64>()) {
        let p = common::random_panel(seed, 6, 40);
        let all: Vec<usize> = (0..6).collect();
        let m = marketmode::window_correlation(&p, marketmode::WindowSpec::new(40, 40), &all).unwrap();
        let g = adjacency_from_correlation(&m);
        let mut e = 0.0;
        for i in 0..6 {
            let mut k = 0.0;
            for j in 0..6 {
                prop_assert_eq!(g.get(i, j), m.get(i, j).abs());
                k += m.get(i, j).abs();
            }
            prop_assert!((g.degrees()[i] - k).abs() <= 1e-15);
            e += k;
        }
        prop_assert!((g.total_weight() - e / 2.0).abs() <= 1e-12);
        prop_assert_eq!(g.get(0, 0), 1.0);
    }
}

#[test]
fn all_ones_graph_has_zero_modularity() {
    for sizes in [vec![2, 2, 2], vec![1, 3, 4]] {
        let n: usize = sizes.iter().sum();
        let labels = common::labels(n);
        let m = CorrMatrix::from_entries(labels.clone(), 0, vec![1.0; n * n]).unwrap();
        let g = adjacency_from_correlation(&m);
        let groups: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(g, &s)| std::iter::repeat_n(g, s))
            .collect();
        let q = modularity(&g, &partition_of(&labels, &groups)).unwrap();
        assert!(q.abs() <= 1e-12);
        assert!((q - brute_q(&vec![1.0; n * n], n, &groups)).abs() <= 1e-12);
    }
}

fn factor_panel(seed: u64, t: usize) -> marketmode::ReturnPanel {
    let cfg = SynthConfig::uniform(4, 6, t, 0.4, 0.5, 0.77, seed);
    log_returns(&generate_factor_market(&cfg).unwrap())
}

#[test]
fn planted_sectors_have_positive_modularity() {
    let p = factor_panel(3, 800);
    let part = Partition::from_sectors(&p);
    let s = modularity_series(&p, 120, &part, SelfLoops::Keep).unwrap();
    assert_eq!(s.q.len(), 800 - 120 + 1);
    let mean = s.q.iter().sum::<f64>() / s.q.len() as f64;
    let sd = (s.q.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / (s.q.len() - 1) as f64).sqrt();
    assert!(s.q.iter().all(|q| *q > 0.0));
    assert!(mean >= 3.0 * sd, "mean {mean} sd {sd}");

    let dropped = modularity_series(&p, 120, &part, SelfLoops::Drop).unwrap();
    assert!(dropped.q.iter().all(|q| *q > 0.0));
}

#[test]
fn single_window_series() {
    let p = factor_panel(4, 120);
    let s = modularity_series(&p, 120, &Partition::from_sectors(&p), SelfLoops::Keep).unwrap();
    assert_eq!(s.q.len(), 1);
}

#[test]
fn baseline_behaviour() {
    let p = factor_panel(5, 300);
    let n = p.n_tickers();
    let single = random_partition_baseline(&p, 120, &[n], 3, 9, SelfLoops::Keep).unwrap();
    assert!(single.draws.iter().flatten().all(|q| q.abs() <= 1e-12));

    let sizes = Partition::from_sectors(&p).sizes();
    let a = random_partition_baseline(&p, 120, &sizes, 20, 9, SelfLoops::Keep).unwrap();
    let b = random_partition_baseline(&p, 120, &sizes, 20, 9, SelfLoops::Keep).unwrap();
    assert_eq!(a, b);
    for w in 0..a.mean.len() {
        assert!(a.p05[w] <= a.mean[w] && a.mean[w] <= a.p95[w]);
    }
    assert!(random_partition_baseline(&p, 120, &[n - 1], 3, 9, SelfLoops::Keep).is_err());
}

#[test]
fn random_groups_score_well_below_sectors() {
    let cfg = SynthConfig::uniform(9, 10, 400, 0.4, 0.5, 0.77, 31);
    let p = log_returns(&generate_factor_market(&cfg).unwrap());
    let part = Partition::from_sectors(&p);
    let truth = modularity_series(&p, 120, &part, SelfLoops::Keep).unwrap();
    let base = random_partition_baseline(&p, 120, &part.sizes(), 100, 2, SelfLoops::Keep).unwrap();
    for (r, t) in base.mean.iter().zip(&truth.q) {
        assert!(*r <= t / 3.0, "{r} vs {t}");
    }
}

#[test]
fn allocation_is_a_permutation_of_sizes() {
    for draw in 0..50 {
        let a = random_allocation(&[5, 3, 3, 1], 77, draw);
        for (g, s) in [5, 3, 3, 1].iter().enumerate() {
            assert_eq!(a.iter().filter(|&&x| x == g).count(), *s);
        }
    }
}
