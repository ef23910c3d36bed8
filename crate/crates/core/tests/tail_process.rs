//! Extremogram, spectral tail and anticlustering estimates on simulated
//! paths with known tail process.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tailchain::asymptotics::{anticlustering_diagnostic, extremogram, spectral_tail_mc};
use tailchain::models::{ArSpec, InnovationDist, ModelSpec};
use tailchain::tailcore::ThresholdSpec;

fn ar1(phi: f64, alpha: f64) -> ModelSpec {
    ModelSpec::Ar(ArSpec::new(vec![phi], InnovationDist::Pareto { alpha, scale: 1.0, signed: false }))
}

#[test]
fn independent_extremogram_vanishes() {
    let n = 100_000;
    let k = 300;
    let path = ar1(0.0, 2.0).simulate(n, 31, None).unwrap();
    let e = extremogram(path.values(), 1.0, 1.0, k, 20).unwrap();
    assert_eq!(e.c0, 1.0);
    let bound = 3.0 * k as f64 / n as f64;
    assert!(e.lags.iter().all(|c| *c < bound), "{:?}", e.lags);
}

#[test]
fn ar1_extremogram_is_geometric() {
    let path = ar1(0.7, 2.0).simulate(1_000_000, 32, None).unwrap();
    let e = extremogram(path.values(), 1.0, 1.0, 2000, 4).unwrap();
    for (j, c) in e.lags.iter().enumerate() {
        let target = 0.49f64.powi(j as i32 + 1);
        assert!((c - target).abs() <= 0.05, "lag {}: {c} vs {target}", j + 1);
    }
}

#[test]
fn independent_spectral_tail_concentrates_at_zero() {
    let path = ar1(0.0, 2.0).simulate(100_000, 33, None).unwrap();
    let est = spectral_tail_mc(path.values(), ThresholdSpec::OrderStat(300), 1).unwrap();
    assert!(est.lag(0).iter().all(|t| *t == 1.0));
    assert!(est.quantile(1, 0.9) < 0.5, "{}", est.quantile(1, 0.9));
}

fn assert_spectral_means(model: ModelSpec, seed: u64) {
    let path = model.simulate(1_000_000, seed, None).unwrap();
    let est = spectral_tail_mc(path.values(), ThresholdSpec::OrderStat(2000), 4).unwrap();
    for j in 1..=4 {
        let target = 0.7f64.powi(j as i32);
        assert!((est.mean(j) - target).abs() <= 0.05, "lag {j}: {} vs {target}", est.mean(j));
    }
}

// Innovations bounded below by 1 add about sum_{i<j} 0.7^i E[Z] E[1/X_t | X_t > u]
// to every ratio, roughly 0.07 at lag 2 with u near 31.
#[test]
#[ignore = "positive innovations bias the lag-2..4 means past 0.05 at k = 2000, n = 1e6"]
fn ar1_spectral_tail_means() {
    assert_spectral_means(ar1(0.7, 2.0), 34);
}

#[test]
fn ar1_spectral_tail_means_symmetric_innovations() {
    let model = ModelSpec::Ar(ArSpec::new(vec![0.7], InnovationDist::Pareto { alpha: 2.0, scale: 1.0, signed: true }));
    assert_spectral_means(model, 34);
}

#[test]
fn permutation_destroys_extremal_dependence() {
    let n = 100_000;
    let k = 300;
    let base = ar1(0.7, 2.0).simulate(n, 35, None).unwrap();
    let bound = 5.0 * k as f64 / n as f64;
    let mut failures = 0;
    for seed in 0..20 {
        let mut x = base.values().to_vec();
        x.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let e = extremogram(&x, 1.0, 1.0, k, 10).unwrap();
        if e.lags.iter().cloned().fold(0.0, f64::max) > bound {
            failures += 1;
        }
    }
    assert_eq!(failures, 0);
}

#[test]
fn independent_anticlustering_sum_is_small() {
    let n = 100_000;
    let path = ar1(0.0, 2.0).simulate(n, 36, None).unwrap();
    let x = path.values();
    let u = tailchain::tailcore::order_statistic(x, 300).unwrap();
    let (r, m) = (50, 1);
    let d = anticlustering_diagnostic(x, u, r, &[m, 10, 50]).unwrap();
    // (r - m + 1) P(X > u) with P(X > u) = k / n.
    let expected = (r - m + 1) as f64 * 300.0 / n as f64;
    assert!(d[&m] < 3.0 * expected, "{} vs {expected}", d[&m]);
    assert!(d[&1] >= d[&10] && d[&10] >= d[&50]);
}
