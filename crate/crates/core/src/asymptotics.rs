//! Extremograms, spectral tail estimates and the limiting variance and
//! covariance formulas of the tail empirical process.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ValidModel;
use crate::tailcore::{order_statistic, ThresholdSpec};

/// Default truncation lag for the infinite covariance series.
pub const DEFAULT_MAX_LAG: usize = 50;

/// Minimum number of exceedance anchors for a spectral tail estimate.
pub const MIN_ANCHORS: usize = 50;

/// `#{t in anchors : X_t > a, X_{t+lag} > b}`.
pub fn joint_exceedance_count(sample: &[f64], a: f64, b: f64, lag: usize, anchors: Range<usize>) -> usize {
    anchors
        .filter(|&t| t + lag < sample.len() && sample[t] > a && sample[t + lag] > b)
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extremogram {
    pub v: f64,
    pub w: f64,
    pub k: usize,
    pub u: f64,
    pub c0: f64,
    /// `lags[j - 1]` is the lag-`j` coefficient.
    pub lags: Vec<f64>,
}

impl Extremogram {
    pub fn max_lag(&self) -> usize {
        self.lags.len()
    }

    /// CSV rows `lag,value` starting at lag 0.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lag", "value"])?;
        w.write_record(["0".to_string(), self.c0.to_string()])?;
        for (j, c) in self.lags.iter().enumerate() {
            w.write_record([(j + 1).to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `c_j(v, w) = #{t : X_t > u v, X_{t+j} > u w} / k` with `u = X_{n:n-k}`,
/// for `j = 0..=max_lag`.
pub fn extremogram(sample: &[f64], v: f64, w: f64, k: usize, max_lag: usize) -> Result<Extremogram> {
    let n = sample.len();
    if 2 * max_lag >= n {
        return Err(Error::InvalidSpec(format!("max lag {max_lag} must be below n/2 = {}", n / 2)));
    }
    if !(v > 0.0 && w > 0.0) {
        return Err(Error::InvalidSpec("extremogram arguments must be > 0".into()));
    }
    let u = order_statistic(sample, k)?;
    let (a, b) = (u * v, u * w);
    let kf = k as f64;
    let c = |lag: usize| joint_exceedance_count(sample, a, b, lag, 0..n - lag) as f64 / kf;
    Ok(Extremogram { v, w, k, u, c0: c(0), lags: (1..=max_lag).map(c).collect() })
}

/// Closed-form extremogram `c_j(1,1) = ((phi^j)_+)^alpha` of an AR(1) with
/// positive heavy-tailed innovations.
pub fn ar1_extremogram(phi: f64, alpha: f64, max_lag: usize) -> Vec<f64> {
    (1..=max_lag as i32).map(|j| phi.powi(j).max(0.0).powf(alpha).min(1.0)).collect()
}

/// Empirical law of `Theta_j = X_{t+j} / X_t` over exceedance anchors `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralTailEstimate {
    pub u: f64,
    pub max_lag: usize,
    pub anchors: Vec<usize>,
    pub anchor_values: Vec<f64>,
    /// `theta[j][i]` is lag `j` for anchor `i`; `theta[0]` is all ones.
    pub theta: Vec<Vec<f64>>,
}

impl SpectralTailEstimate {
    pub fn lag(&self, j: usize) -> &[f64] {
        &self.theta[j]
    }

    pub fn mean(&self, j: usize) -> f64 {
        let t = &self.theta[j];
        t.iter().sum::<f64>() / t.len() as f64
    }

    /// Empirical `q`-quantile (lower interpolation-free order statistic).
    pub fn quantile(&self, j: usize, q: f64) -> f64 {
        let mut t = self.theta[j].clone();
        t.sort_by(f64::total_cmp);
        let idx = ((q * t.len() as f64).ceil() as usize).clamp(1, t.len()) - 1;
        t[idx]
    }

    /// Mean of `(Theta_j)_+^alpha ^ 1`.
    pub fn capped_power_mean(&self, j: usize, alpha: f64) -> f64 {
        let t = &self.theta[j];
        t.iter().map(|x| x.max(0.0).powf(alpha).min(1.0)).sum::<f64>() / t.len() as f64
    }
}

/// Collects `(X_{t+1}/X_t, ..., X_{t+L}/X_t)` for every `t` with `X_t > u`;
/// anchors within `L` of the end are skipped and overlapping anchors kept.
pub fn spectral_tail_mc(sample: &[f64], threshold: ThresholdSpec, max_lag: usize) -> Result<SpectralTailEstimate> {
    let u = threshold.resolve(sample)?.u;
    let n = sample.len();
    let anchors: Vec<usize> = (0..n.saturating_sub(max_lag)).filter(|&t| sample[t] > u).collect();
    if anchors.len() < MIN_ANCHORS {
        return Err(Error::InsufficientExceedances { found: anchors.len(), required: MIN_ANCHORS });
    }
    let anchor_values: Vec<f64> = anchors.iter().map(|&t| sample[t]).collect();
    let theta = (0..=max_lag)
        .map(|j| {
            if j == 0 {
                vec![1.0; anchors.len()]
            } else {
                anchors.iter().map(|&t| sample[t + j] / sample[t]).collect()
            }
        })
        .collect();
    Ok(SpectralTailEstimate { u, max_lag, anchors, anchor_values, theta })
}

/// Simulates a path from the model and estimates its spectral tail process.
pub fn spectral_tail_from_model(
    model: &ValidModel,
    n: usize,
    seed: u64,
    threshold: ThresholdSpec,
    max_lag: usize,
) -> Result<SpectralTailEstimate> {
    let path = model.simulate(n, seed, None)?;
    spectral_tail_mc(path.values(), threshold, max_lag)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesValue {
    pub value: f64,
    /// Number of lags summed; `None` for closed forms.
    pub truncation_lag: Option<usize>,
    /// Magnitude of the last summed term (truncation diagnostic).
    pub last_term: f64,
}

/// Where the spectral tail functionals come from.
#[derive(Debug, Clone, Copy)]
pub enum ThetaSource<'a> {
    Empirical(&'a SpectralTailEstimate),
    /// `Theta_j = 0` for `j != 0`.
    ExtremalIndependence,
    /// `Theta_j = phi^j`.
    Ar1 { phi: f64 },
}

/// `alpha^-2 (1 + 2 sum_{j >= 1} E[(Theta_j)_+^alpha ^ 1])`.
pub fn hill_limit_variance(source: ThetaSource<'_>, alpha: f64) -> Result<SeriesValue> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidSpec(format!("alpha must be > 0, got {alpha}")));
    }
    let inv2 = alpha.powi(-2);
    Ok(match source {
        ThetaSource::ExtremalIndependence => SeriesValue { value: inv2, truncation_lag: None, last_term: 0.0 },
        ThetaSource::Ar1 { phi } => {
            if !(phi.abs() < 1.0) {
                return Err(Error::InvalidSpec(format!("AR(1) closed form needs |phi| < 1, got {phi}")));
            }
            // Positive parts survive at every lag for phi >= 0 and at even
            // lags only for phi < 0.
            let sum = if phi >= 0.0 {
                let r = phi.powf(alpha);
                r / (1.0 - r)
            } else {
                let r = phi.abs().powf(2.0 * alpha);
                r / (1.0 - r)
            };
            SeriesValue { value: inv2 * (1.0 + 2.0 * sum), truncation_lag: None, last_term: 0.0 }
        }
        ThetaSource::Empirical(est) => {
            let terms: Vec<f64> = (1..=est.max_lag).map(|j| est.capped_power_mean(j, alpha)).collect();
            let sum: f64 = terms.iter().sum();
            SeriesValue {
                value: inv2 * (1.0 + 2.0 * sum),
                truncation_lag: Some(est.max_lag),
                last_term: terms.last().copied().unwrap_or(0.0),
            }
        }
    })
}

/// `C(v, w) = c_0 + sum_{j=1}^{L} (c_j(v, w) + c_j(w, v))`.
pub fn covariance_series(c0: f64, forward: &[f64], backward: &[f64]) -> Result<SeriesValue> {
    if forward.len() != backward.len() {
        return Err(Error::LengthMismatch { what: "backward extremogram", got: backward.len(), expected: forward.len() });
    }
    if forward.is_empty() {
        return Err(Error::InvalidSpec("covariance series needs at least one lag".into()));
    }
    let pairs: Vec<f64> = forward.iter().zip(backward).map(|(a, b)| a + b).collect();
    Ok(SeriesValue {
        value: c0 + pairs.iter().sum::<f64>(),
        truncation_lag: Some(pairs.len()),
        last_term: pairs.last().copied().unwrap_or(0.0).abs(),
    })
}

/// Plug-in `C(v, w)` from the two empirical extremograms of one sample.
pub fn covariance_from_sample(sample: &[f64], v: f64, w: f64, k: usize, max_lag: usize) -> Result<SeriesValue> {
    let fwd = extremogram(sample, v, w, k, max_lag)?;
    let bwd = extremogram(sample, w, v, k, max_lag)?;
    covariance_series(fwd.c0, &fwd.lags, &bwd.lags)
}

/// Limiting covariance of the renewal chain's tail empirical process in its
/// Gaussian regime, `(beta+1) t^{1-beta} / (beta (beta-1)) - s t^{-beta} / beta`
/// for `s <= t`, extended symmetrically.
pub fn counterexample_cov(beta: f64, s: f64, t: f64) -> Result<f64> {
    if !(beta > 2.0) {
        return Err(Error::OutOfRegime(format!("Gaussian regime needs beta > 2, got {beta}")));
    }
    if !(s > 0.0 && t > 0.0) {
        return Err(Error::InvalidSpec("covariance arguments must be > 0".into()));
    }
    let (s, t) = if s <= t { (s, t) } else { (t, s) };
    Ok((beta + 1.0) * t.powf(1.0 - beta) / (beta * (beta - 1.0)) - s * t.powf(-beta) / beta)
}

/// Empirical partial sums `sum_{j=m}^{r} P(X_j > u | X_0 > u)` for each `m`,
/// where lag `j` is estimated over the anchors that have a lag-`j` successor.
pub fn anticlustering_diagnostic(sample: &[f64], u: f64, r: usize, m_grid: &[usize]) -> Result<BTreeMap<usize, f64>> {
    let n = sample.len();
    if 2 * r >= n {
        return Err(Error::InvalidSpec(format!("window r={r} must be below n/2")));
    }
    if !sample.iter().any(|x| *x > u) {
        return Err(Error::ZeroExceedances(u));
    }
    let terms: Vec<f64> = (0..=r)
        .map(|j| {
            let anchors = sample[..n - j].iter().filter(|x| **x > u).count();
            if anchors == 0 {
                0.0
            } else {
                joint_exceedance_count(sample, u, u, j, 0..n - j) as f64 / anchors as f64
            }
        })
        .collect();
    let mut out = BTreeMap::new();
    for &m in m_grid {
        if m > r {
            return Err(Error::InvalidSpec(format!("m={m} exceeds r={r}")));
        }
        out.insert(m, terms[m..=r].iter().sum());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tie_free_c0_is_one() {
        let s: Vec<f64> = (0..200).map(|i| ((i * 7919) % 211) as f64).collect();
        let e = extremogram(&s, 1.0, 1.0, 20, 10).unwrap();
        assert_eq!(e.c0, 1.0);
        assert_eq!(e.max_lag(), 10);
        assert!(extremogram(&s, 1.0, 1.0, 20, 100).is_err());
    }

    #[test]
    fn hill_variance_closed_forms() {
        let v = hill_limit_variance(ThetaSource::ExtremalIndependence, 2.0).unwrap();
        assert_eq!(v.value, 0.25);
        let v = hill_limit_variance(ThetaSource::Ar1 { phi: 0.7 }, 2.0).unwrap();
        // Geometric series with ratio 0.49.
        let oracle = 0.25 * (1.0 + 2.0 * 0.49 / 0.51);
        assert!((v.value - oracle).abs() < 1e-14);
        assert!((v.value - 0.7304).abs() < 1e-4);
    }

    #[test]
    fn covariance_closed_form_ar1() {
        let c = ar1_extremogram(0.7, 2.0, 400);
        let v = covariance_series(1.0, &c, &c).unwrap();
        assert!((v.value - (1.0 + 2.0 * 0.49 / 0.51)).abs() < 1e-12);
        let iid = covariance_series(1.0, &[0.0; 5], &[0.0; 5]).unwrap();
        assert_eq!(iid.value, 1.0);
        assert!(covariance_series(1.0, &[0.0; 2], &[0.0; 3]).is_err());
    }

    #[test]
    fn counterexample_cov_values() {
        assert!((counterexample_cov(3.0, 1.0, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((counterexample_cov(3.0, 1.0, 2.0).unwrap() - 0.125).abs() < 1e-15);
        assert_eq!(counterexample_cov(3.0, 2.0, 1.0).unwrap(), counterexample_cov(3.0, 1.0, 2.0).unwrap());
        assert!(matches!(counterexample_cov(2.0, 1.0, 1.0), Err(Error::OutOfRegime(_))));
    }

    #[test]
    fn anticlustering_constant_sample() {
        let s = vec![3.0; 100];
        let d = anticlustering_diagnostic(&s, 1.0, 10, &[2, 10]).unwrap();
        assert_eq!(d[&2], 9.0);
        assert_eq!(d[&10], 1.0);
        assert!(matches!(anticlustering_diagnostic(&s, 5.0, 10, &[2]), Err(Error::ZeroExceedances(_))));
    }

    #[test]
    fn anticlustering_boundary_single_term() {
        let s: Vec<f64> = (0..300).map(|i| ((i * 37) % 101) as f64).collect();
        let u = 80.0;
        let r = 12;
        let d = anticlustering_diagnostic(&s, u, r, &[r]).unwrap();
        let anchors = s[..s.len() - r].iter().filter(|x| **x > u).count() as f64;
        let joint = joint_exceedance_count(&s, u, u, r, 0..s.len() - r) as f64;
        assert_eq!(d[&r], joint / anchors);
    }

    #[test]
    fn spectral_requires_anchors() {
        let s: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert!(matches!(
            spectral_tail_mc(&s, ThresholdSpec::OrderStat(10), 3),
            Err(Error::InsufficientExceedances { .. })
        ));
        let est = spectral_tail_mc(&s, ThresholdSpec::Level(0.5), 3).unwrap();
        assert!(est.lag(0).iter().all(|x| *x == 1.0));
    }

    proptest! {
        #[test]
        fn hill_variance_floor(vals in proptest::collection::vec(0.01f64..5.0, 60..200), alpha in 0.5f64..4.0) {
            let est = spectral_tail_mc(&vals, ThresholdSpec::Level(0.005), 3).unwrap();
            let v = hill_limit_variance(ThetaSource::Empirical(&est), alpha).unwrap();
            prop_assert!(v.value >= alpha.powi(-2));
        }

        #[test]
        fn series_monotone_in_lag(c in proptest::collection::vec(0.0f64..1.0, 1..20)) {
            let mut prev = f64::NEG_INFINITY;
            for l in 1..=c.len() {
                let v = covariance_series(1.0, &c[..l], &c[..l]).unwrap().value;
                prop_assert!(v >= prev);
                prev = v;
            }
        }

        #[test]
        fn symmetric_inputs_symmetric_output(c in proptest::collection::vec(0.0f64..1.0, 1..20)) {
            let r: Vec<f64> = c.iter().rev().cloned().collect();
            let a = covariance_series(0.7, &c, &r).unwrap().value;
            let b = covariance_series(0.7, &r, &c).unwrap().value;
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn counterexample_cov_positive_and_continuous(beta in 2.05f64..8.0, s in 0.1f64..5.0, t in 0.1f64..5.0) {
            let c = counterexample_cov(beta, s, t).unwrap();
            prop_assert!(c > 0.0);
            let diag = counterexample_cov(beta, t, t).unwrap();
            prop_assert!((diag - 2.0 * t.powf(1.0 - beta) / (beta * (beta - 1.0))).abs() < 1e-12 * diag.max(1.0));
        }

        #[test]
        fn spectral_matches_extremogram_counts(vals in proptest::collection::vec(0.0f64..10.0, 150..300)) {
            let est = match spectral_tail_mc(&vals, ThresholdSpec::Level(4.0), 5) {
                Ok(e) => e,
                Err(_) => return Ok(()),
            };
            let n = vals.len();
            for j in 1..=5 {
                let from_theta = est.lag(j).iter().zip(&est.anchor_values)
                    .filter(|(th, x)| **th * **x > est.u).count();
                let direct = joint_exceedance_count(&vals, est.u, est.u, j, 0..n - 5);
                prop_assert_eq!(from_theta, direct);
            }
        }
    }
}
