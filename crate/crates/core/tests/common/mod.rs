//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use chrono::NaiveDate;
use marketmode::seed::rng_for;
use marketmode::ReturnPanel;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn dates(len: usize) -> Vec<NaiveDate> {
    let d0 = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
    (0..len).map(|k| d0 + chrono::Days::new(k as u64)).collect()
}

pub fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("T{i:02}")).collect()
}

pub fn panel(returns: Vec<Vec<f64>>, sectors: Vec<String>) -> ReturnPanel {
    let n = returns.len();
    let len = returns[0].len();
    ReturnPanel::from_returns(labels(n), sectors, dates(len), returns).unwrap()
}

/// Gaussian panel with a random common factor of random strength, so some
/// panels are nearly independent and some strongly correlated.
pub fn random_panel(seed: u64, n: usize, len: usize) -> ReturnPanel {
    let mut rng = rng_for(seed, &[0xFA]);
    let beta: f64 = rng.random_range(0.0..1.5);
    let scale: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..3.0)).collect();
    let shift: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let common: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    let returns = (0..n)
        .map(|i| {
            (0..len)
                .map(|t| {
                    let e: f64 = rng.sample(StandardNormal);
                    shift[i] + scale[i] * (beta * common[t] + e)
                })
                .collect()
        })
        .collect();
    panel(returns, vec!["S".into(); n])
}

/// Pearson correlation from raw moments, summed term by term over the window
/// `returns[end - tau .. end]`.
pub fn brute_correlation(r: &[Vec<f64>], subset: &[usize], tau: usize, end: usize) -> Vec<f64> {
    let k = subset.len();
    let t0 = end - tau;
    let mean = |i: usize| {
        let mut s = 0.0;
        for t in t0..end {
            s += r[i][t];
        }
        s / tau as f64
    };
    let mut out = vec![0.0; k * k];
    for (a, &i) in subset.iter().enumerate() {
        for (b, &j) in subset.iter().enumerate() {
            let (mi, mj) = (mean(i), mean(j));
            let (mut cov, mut vi, mut vj) = (0.0, 0.0, 0.0);
            for t in t0..end {
                cov += (r[i][t] - mi) * (r[j][t] - mj);
                vi += (r[i][t] - mi) * (r[i][t] - mi);
                vj += (r[j][t] - mj) * (r[j][t] - mj);
            }
            out[a * k + b] = cov / (vi.sqrt() * vj.sqrt());
        }
    }
    out
}

pub fn eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let m = nalgebra::DMatrix::from_row_slice(n, n, a);
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}
