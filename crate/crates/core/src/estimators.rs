//! Extreme-value estimators built on the threshold `u = X_{n:n-k}`.
//!
//! Each estimator is also available as an [`Estimator`] trait object so the
//! harness and CLI can pick one by name from an [`EstimatorRegistry`].

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tailcore::order_statistic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub name: String,
    pub value: f64,
    pub k: usize,
    pub h: usize,
    pub n: usize,
    #[serde(default)]
    pub auxiliary: BTreeMap<String, f64>,
}

impl EstimateRecord {
    fn new(name: &str, value: f64, k: usize, h: usize, n: usize, u: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::UndefinedEstimator(format!("{name} produced a non-finite value")));
        }
        let mut auxiliary = BTreeMap::new();
        auxiliary.insert("threshold".to_owned(), u);
        Ok(EstimateRecord { name: name.to_owned(), value, k, h, n, auxiliary })
    }

    pub const CSV_HEADER: [&'static str; 6] = ["name", "n", "k", "h", "value", "auxiliary"];

    /// One CSV row; auxiliary values are packed as `key=value` pairs joined by `;`.
    pub fn csv_row(&self) -> Vec<String> {
        let aux = self.auxiliary.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";");
        vec![
            self.name.clone(),
            self.n.to_string(),
            self.k.to_string(),
            self.h.to_string(),
            self.value.to_string(),
            aux,
        ]
    }
}

pub fn write_records_csv<W: Write>(records: &[EstimateRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EstimateRecord::CSV_HEADER)?;
    for r in records {
        w.write_record(r.csv_row())?;
    }
    w.flush()?;
    Ok(())
}

fn positive_threshold(sample: &[f64], k: usize, name: &str) -> Result<f64> {
    let u = order_statistic(sample, k)?;
    if u <= 0.0 {
        return Err(Error::UndefinedEstimator(format!("{name}: threshold order statistic {u} is not positive")));
    }
    Ok(u)
}

fn check_lag(sample: &[f64], h: usize, min_h: usize) -> Result<()> {
    if h < min_h {
        return Err(Error::InvalidSpec(format!("lag h must be >= {min_h}, got {h}")));
    }
    if sample.len() <= h {
        return Err(Error::InvalidSpec(format!("need n > h, got n={} h={h}", sample.len())));
    }
    Ok(())
}

/// Hill estimate of `1/alpha`: mean of `log+(X_{n:n-j+1} / X_{n:n-k})`, `j = 1..=k`.
pub fn hill(sample: &[f64], k: usize) -> Result<EstimateRecord> {
    let u = positive_threshold(sample, k, "hill")?;
    let sum: f64 = sample.iter().filter(|x| **x > u).map(|x| (x / u).ln()).sum();
    EstimateRecord::new("hill", sum / k as f64, k, 0, sample.len(), u)
}

/// Number of windows `X_{j..j+len}`, `j < windows`, whose maximum exceeds `u`.
pub fn max_exceedance_windows(sample: &[f64], len: usize, windows: usize, u: f64) -> usize {
    // Index of the most recent exceedance, scanned left to right.
    let mut last: Option<usize> = None;
    let mut count = 0;
    let mut next = 0;
    for j in 0..windows {
        let end = j + len; // inclusive
        while next <= end {
            if sample[next] > u {
                last = Some(next);
            }
            next += 1;
        }
        if matches!(last, Some(t) if t >= j) {
            count += 1;
        }
    }
    count
}

/// Number of `i < windows` with `max(X_i..X_{i+h-1}) <= u < X_{i+h}`.
pub fn first_exceedance_windows(sample: &[f64], h: usize, windows: usize, u: f64) -> usize {
    let mut count = 0;
    let mut quiet_run = 0usize; // consecutive non-exceedances ending at i+h-1
    for (idx, x) in sample.iter().enumerate().take(windows + h) {
        if idx >= h && idx - h < windows && *x > u && quiet_run >= h {
            count += 1;
        }
        if *x > u {
            quiet_run = 0;
        } else {
            quiet_run += 1;
        }
    }
    count
}

/// Running-maximum estimate of `theta_+(h)`: windows of `h + 1` values whose
/// maximum exceeds the threshold, divided by `h k`.
pub fn extremal_index_hat(sample: &[f64], h: usize, k: usize) -> Result<EstimateRecord> {
    check_lag(sample, h, 1)?;
    let u = order_statistic(sample, k)?;
    let n = sample.len();
    let count = max_exceedance_windows(sample, h, n - h, u);
    EstimateRecord::new("extremal_index_hat", count as f64 / (h * k) as f64, k, h, n, u)
}

/// Runs estimator: `h` quiet values followed by an exceedance, divided by `k`.
pub fn extremal_index_tilde(sample: &[f64], h: usize, k: usize) -> Result<EstimateRecord> {
    check_lag(sample, h, 1)?;
    let u = order_statistic(sample, k)?;
    let n = sample.len();
    let count = first_exceedance_windows(sample, h, n - h, u);
    EstimateRecord::new("extremal_index_tilde", count as f64 / k as f64, k, h, n, u)
}

/// Window sums `X_j + ... + X_{j+h}` exceeding the threshold, divided by `k h`.
pub fn cluster_index_hat(sample: &[f64], h: usize, k: usize) -> Result<EstimateRecord> {
    check_lag(sample, h, 1)?;
    let u = order_statistic(sample, k)?;
    let n = sample.len();
    let count = sample.windows(h + 1).filter(|w| w.iter().sum::<f64>() > u).count();
    EstimateRecord::new("cluster_index_hat", count as f64 / (k * h) as f64, k, h, n, u)
}

fn lagged_exceedance_sum(sample: &[f64], h: usize, u: f64) -> f64 {
    sample
        .iter()
        .zip(&sample[h..])
        .filter(|(x0, _)| **x0 > u)
        .map(|(_, xh)| *xh)
        .sum()
}

fn check_cte_range(sample: &[f64], h: usize, k: usize) -> Result<()> {
    check_lag(sample, h, 0)?;
    let n = sample.len();
    if k == 0 || k + 1 + h > n {
        return Err(Error::KOutOfRange { k, n });
    }
    Ok(())
}

/// Conditional tail expectation `sum X_{j+h} 1{X_j > u} / (k u)`.
pub fn cte_hat(sample: &[f64], h: usize, k: usize) -> Result<EstimateRecord> {
    check_cte_range(sample, h, k)?;
    let u = positive_threshold(sample, k, "cte_hat")?;
    let value = lagged_exceedance_sum(sample, h, u) / (k as f64 * u);
    EstimateRecord::new("cte_hat", value, k, h, sample.len(), u)
}

fn extrapolation_factor(sample: &[f64], k: usize, p: f64) -> Result<(f64, f64, f64)> {
    let n = sample.len();
    let limit = k as f64 / n as f64;
    if !(p > 0.0) || p > limit {
        return Err(Error::ExtrapolationDirection { p, limit });
    }
    let gamma = hill(sample, k)?;
    if !(gamma.value > 0.0) {
        return Err(Error::UndefinedEstimator("Hill estimate is zero; cannot extrapolate".into()));
    }
    let u = gamma.auxiliary["threshold"];
    Ok(((limit / p).powf(gamma.value), u, gamma.value))
}

/// Extrapolated quantile `X_{n:n-k} (k / (n p))^{1/alpha_hat}`, `alpha_hat = 1/hill`.
pub fn extreme_quantile(sample: &[f64], k: usize, p: f64) -> Result<EstimateRecord> {
    let (factor, u, gamma) = extrapolation_factor(sample, k, p)?;
    let mut rec = EstimateRecord::new("extreme_quantile", u * factor, k, 0, sample.len(), u)?;
    rec.auxiliary.insert("p".into(), p);
    rec.auxiliary.insert("hill".into(), gamma);
    Ok(rec)
}

/// `(k / (n p))^{1/alpha_hat} (1/k) sum X_{j+h} 1{X_j > X_{n:n-k}}`.
pub fn cte_extrapolated(sample: &[f64], h: usize, k: usize, p: f64) -> Result<EstimateRecord> {
    check_cte_range(sample, h, k)?;
    let (factor, u, gamma) = extrapolation_factor(sample, k, p)?;
    let value = factor * lagged_exceedance_sum(sample, h, u) / k as f64;
    let mut rec = EstimateRecord::new("cte_extrapolated", value, k, h, sample.len(), u)?;
    rec.auxiliary.insert("p".into(), p);
    rec.auxiliary.insert("hill".into(), gamma);
    Ok(rec)
}

/// Parameters shared by every estimator; unused fields are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    pub k: usize,
    #[serde(default)]
    pub h: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
}

impl EstimatorParams {
    pub fn new(k: usize) -> Self {
        EstimatorParams { k, h: 0, p: None }
    }

    pub fn with_h(mut self, h: usize) -> Self {
        self.h = h;
        self
    }

    fn require_p(&self, name: &str) -> Result<f64> {
        self.p.ok_or_else(|| Error::InvalidSpec(format!("{name} requires a probability p")))
    }

    /// The same parameters on a sample `factor` times longer (k scaled).
    pub fn scaled(&self, factor: f64) -> Self {
        EstimatorParams { k: ((self.k as f64) * factor).round() as usize, ..*self }
    }
}

pub trait Estimator: Send + Sync {
    fn name(&self) -> &'static str;
    fn estimate(&self, sample: &[f64], params: &EstimatorParams) -> Result<EstimateRecord>;
}

macro_rules! estimator {
    ($ty:ident, $name:literal, |$s:ident, $p:ident| $body:expr) => {
        pub struct $ty;

        impl Estimator for $ty {
            fn name(&self) -> &'static str {
                $name
            }

            fn estimate(&self, $s: &[f64], $p: &EstimatorParams) -> Result<EstimateRecord> {
                $body
            }
        }
    };
}

estimator!(Hill, "hill", |s, p| hill(s, p.k));
estimator!(ExtremalIndexHat, "extremal_index_hat", |s, p| extremal_index_hat(s, p.h, p.k));
estimator!(ExtremalIndexTilde, "extremal_index_tilde", |s, p| extremal_index_tilde(s, p.h, p.k));
estimator!(ClusterIndexHat, "cluster_index_hat", |s, p| cluster_index_hat(s, p.h, p.k));
estimator!(CteHat, "cte_hat", |s, p| cte_hat(s, p.h, p.k));
estimator!(ExtremeQuantile, "extreme_quantile", |s, p| extreme_quantile(s, p.k, p.require_p("extreme_quantile")?));
estimator!(CteExtrapolated, "cte_extrapolated", |s, p| cte_extrapolated(
    s,
    p.h,
    p.k,
    p.require_p("cte_extrapolated")?
));

/// Name-keyed collection of estimators.
pub struct EstimatorRegistry {
    entries: BTreeMap<&'static str, Box<dyn Estimator>>,
}

impl EstimatorRegistry {
    pub fn empty() -> Self {
        EstimatorRegistry { entries: BTreeMap::new() }
    }

    pub fn register(&mut self, estimator: Box<dyn Estimator>) {
        self.entries.insert(estimator.name(), estimator);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Estimator> {
        self.entries
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::UnknownName { kind: "estimator", name: name.to_owned() })
    }

    /// Moves an estimator out of the registry.
    pub fn take(&mut self, name: &str) -> Result<Box<dyn Estimator>> {
        self.entries
            .remove(name)
            .ok_or_else(|| Error::UnknownName { kind: "estimator", name: name.to_owned() })
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }
}

impl Default for EstimatorRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(Hill));
        r.register(Box::new(ExtremalIndexHat));
        r.register(Box::new(ExtremalIndexTilde));
        r.register(Box::new(ClusterIndexHat));
        r.register(Box::new(CteHat));
        r.register(Box::new(ExtremeQuantile));
        r.register(Box::new(CteExtrapolated));
        r
    }
}
