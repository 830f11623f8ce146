mod common;

use marketmode::seed::rng_for;
use marketmode::{
    average_linkage, cut_clusters, distance_matrix, median_distance, DistanceMatrix,
    PercentileCurves,
};
use proptest::prelude::*;
use rand::Rng;

fn curve(m: usize, n: usize, p50: Vec<f64>) -> PercentileCurves {
    PercentileCurves {
        m,
        n,
        dates: common::dates(p50.len()),
        p05: p50.iter().map(|x| x - 0.05).collect(),
        p95: p50.iter().map(|x| x + 0.05).collect(),
        p50,
    }
}

fn random_curves(seed: u64, k: usize, len: usize) -> Vec<PercentileCurves> {
    let mut rng = rng_for(seed, &[3]);
    (0..k)
        .map(|i| curve(i, 0, (0..len).map(|_| rng.random::<f64>()).collect()))
        .collect()
}

fn random_matrix(seed: u64, k: usize) -> DistanceMatrix {
    let mut rng = rng_for(seed, &[4]);
    let mut e = vec![0.0; k * k];
    for i in 0..k {
        for j in i + 1..k {
            let d = rng.random::<f64>();
            e[i * k + j] = d;
            e[j * k + i] = d;
        }
    }
    DistanceMatrix::new(vec![(0, 0); k], e).unwrap()
}

/// Clusters as explicit item lists; every step averages all item pairs anew.
fn naive_upgma(dm: &DistanceMatrix) -> Vec<(usize, usize, f64)> {
    let k = dm.len();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..k).map(|i| (i, vec![i])).collect();
    let mut out = vec![];
    for step in 0..k.saturating_sub(1) {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let (ia, ma) = &clusters[a];
                let (ib, mb) = &clusters[b];
                let mut s = 0.0;
                for &x in ma {
                    for &y in mb {
                        s += dm.get(x, y);
                    }
                }
                let d = s / (ma.len() * mb.len()) as f64;
                let key = ((*ia).min(*ib), (*ia).max(*ib));
                let better = match best {
                    None => true,
                    Some((bd, bk, _, _)) => d < bd - 1e-13 || ((d - bd).abs() <= 1e-13 && key < bk),
                };
                if better {
                    best = Some((d, key, a, b));
                }
            }
        }
        let (d, key, a, b) = best.unwrap();
        let mb = clusters.remove(b).1;
        let ma = clusters.remove(a).1;
        clusters.push((k + step, [ma, mb].concat()));
        out.push((key.0, key.1, d));
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn linkage_matches_naive_reference(seed in any::<u64>()) {
        let dm = random_matrix(seed, 10);
        let d = average_linkage(&dm);
        let naive = naive_upgma(&dm);
        prop_assert_eq!(d.merges.len(), 9);
        for (m, (a, b, h)) in d.merges.iter().zip(&naive) {
            prop_assert_eq!((m.a, m.b), (*a, *b));
            prop_assert!((m.height - h).abs() <= 1e-12);
        }
    }

    #[test]
    fn dendrogram_structure(seed in any::<u64>(), k in 1usize..=16, shift in 0usize..16) {
        let curves = random_curves(seed, k, 9);
        let dm = distance_matrix(&curves).unwrap();
        let d = average_linkage(&dm);
        prop_assert_eq!(d.merges.len(), k - 1);
        prop_assert!(d.merges.windows(2).all(|w| w[1].height >= w[0].height - 1e-12));
        let mut used = vec![0; 2 * k - 1];
        for m in &d.merges {
            used[m.a] += 1;
            used[m.b] += 1;
        }
        prop_assert!(used[..2 * k - 2].iter().all(|&u| u == 1));
        prop_assert_eq!(d.merges.last().map_or(1, |m| m.size), k);
        for c in 1..=k {
            let labels = cut_clusters(&d, c).unwrap();
            prop_assert_eq!(labels.iter().max().unwrap() + 1, c);
        }

        // permuted item order: same heights
        let perm: Vec<PercentileCurves> = (0..k).map(|i| curves[(i + shift) % k].clone()).collect();
        let dp = average_linkage(&distance_matrix(&perm).unwrap());
        for (x, y) in d.merges.iter().zip(&dp.merges) {
            prop_assert!((x.height - y.height).abs() <= 1e-12);
        }
    }
}

#[test]
fn distance_is_a_pseudometric() {
    let curves = random_curves(17, 40, 25);
    let dm = distance_matrix(&curves).unwrap();
    let mut rng = rng_for(18, &[]);
    for _ in 0..500 {
        let (a, b, c) = (
            rng.random_range(0..40),
            rng.random_range(0..40),
            rng.random_range(0..40),
        );
        assert!(dm.get(a, c) <= dm.get(a, b) + dm.get(b, c) + 1e-15);
        assert_eq!(dm.get(a, b), dm.get(b, a));
        assert!(dm.get(a, b) >= 0.0);
    }
}

#[test]
fn distance_by_hand_on_length_seven() {
    let a = curve(2, 2, vec![0.1, 0.5, 0.3, 0.9, 0.2, 0.4, 0.7]);
    let b = curve(3, 3, vec![0.2, 0.1, 0.3, 0.6, 0.5, 0.45, 0.1]);
    let by_hand = (0.1 + 0.4 + 0.0 + 0.3 + 0.3 + 0.05 + 0.6) / 7.0;
    assert!((median_distance(&a, &b).unwrap() - by_hand).abs() <= 1e-12);
}

#[test]
fn planted_families_are_recovered() {
    let mut rng = rng_for(23, &[]);
    let mut curves = vec![];
    let mut family = vec![];
    for i in 0..18 {
        let f = i % 3;
        let level = 0.2 + 0.3 * f as f64;
        curves.push(curve(
            i,
            0,
            (0..30)
                .map(|_| level + 0.02 * (rng.random::<f64>() - 0.5))
                .collect(),
        ));
        family.push(f);
    }
    let d = average_linkage(&distance_matrix(&curves).unwrap());
    let labels = cut_clusters(&d, 3).unwrap();
    for i in 0..18 {
        for j in 0..18 {
            assert_eq!(labels[i] == labels[j], family[i] == family[j]);
        }
    }
}

#[test]
fn full_grid_has_64_items() {
    let mut curves = vec![];
    for m in 2..=9 {
        for n in 2..=9 {
            curves.push(curve(m, n, vec![1.0 / (m * n) as f64; 5]));
        }
    }
    let dm = distance_matrix(&curves).unwrap();
    assert_eq!(dm.len(), 64);
    assert_eq!(dm.entries().len(), 64 * 64);
}
