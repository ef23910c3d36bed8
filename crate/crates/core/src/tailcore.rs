//! Order statistics, thresholds and the multivariate (weighted) tail
//! empirical distribution and process.
//!
//! A window `X_{j..=j+h}` "exceeds" `v` at threshold `u` when some
//! coordinate satisfies `X_{j+i} > u * v_i` (strict). Sums run over the
//! `n - h` fully in-range windows.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSpec {
    Level(f64),
    OrderStat(usize),
}

/// A threshold resolved against a sample, together with the normalizer `D`
/// that replaces `n * F(u)` (the survival at `u`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedThreshold {
    pub u: f64,
    pub normalizer: f64,
    pub k: Option<usize>,
}

impl ThresholdSpec {
    /// Order-stat thresholds give `u = X_{n:n-k}`, `D = k`; levels give the
    /// empirical exceedance count as `D`.
    pub fn resolve(&self, sample: &[f64]) -> Result<ResolvedThreshold> {
        match *self {
            ThresholdSpec::Level(u) => {
                if !(u > 0.0 && u.is_finite()) {
                    return Err(Error::InvalidSpec(format!("threshold level must be > 0, got {u}")));
                }
                let count = sample.iter().filter(|x| **x > u).count();
                Ok(ResolvedThreshold { u, normalizer: count as f64, k: None })
            }
            ThresholdSpec::OrderStat(k) => {
                let u = order_statistic(sample, k)?;
                Ok(ResolvedThreshold { u, normalizer: k as f64, k: Some(k) })
            }
        }
    }

    /// The same tail fraction on a sample `factor` times longer.
    pub fn scaled(&self, factor: f64) -> ThresholdSpec {
        match *self {
            ThresholdSpec::Level(u) => ThresholdSpec::Level(u),
            ThresholdSpec::OrderStat(k) => ThresholdSpec::OrderStat(((k as f64) * factor).round() as usize),
        }
    }
}

/// `X_{n:n-k}`, the (k+1)-th largest value.
pub fn order_statistic(sample: &[f64], k: usize) -> Result<f64> {
    let n = sample.len();
    if k == 0 || k >= n {
        return Err(Error::KOutOfRange { k, n });
    }
    let mut buf = sample.to_vec();
    let (_, nth, _) = buf.select_nth_unstable_by(n - k - 1, |a, b| a.total_cmp(b));
    Ok(*nth)
}

/// Weight functions `psi` applied to the rescaled window `X_{j..=j+h} / u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "weight", rename_all = "snake_case")]
pub enum WeightFn {
    /// `psi = 1`.
    #[default]
    Indicator,
    /// `psi(x) = x_i`.
    Coordinate { index: usize },
    /// `psi(x) = prod_i |x_i|^{q_i}`.
    ProductPower { exponents: Vec<f64> },
}

impl WeightFn {
    pub fn eval(&self, scaled: &[f64]) -> f64 {
        match self {
            WeightFn::Indicator => 1.0,
            WeightFn::Coordinate { index } => scaled[*index],
            WeightFn::ProductPower { exponents } => scaled
                .iter()
                .zip(exponents)
                .map(|(x, q)| if *q == 0.0 { 1.0 } else { x.abs().powf(*q) })
                .product(),
        }
    }

    /// Growth exponents `q_0..q_h` with `|psi(x)| <= c sum_i (|x_i| v 1)^{q_i}`.
    pub fn declared_exponents(&self, h: usize) -> Vec<f64> {
        match self {
            WeightFn::Indicator => vec![0.0; h + 1],
            WeightFn::Coordinate { index } => (0..=h).map(|i| if i == *index { 1.0 } else { 0.0 }).collect(),
            WeightFn::ProductPower { exponents } => {
                // AM-GM: the product is bounded by the total degree on every
                // coordinate that carries weight.
                let total: f64 = exponents.iter().sum();
                exponents.iter().map(|q| if *q > 0.0 { total } else { 0.0 }).collect()
            }
        }
    }

    fn check_shape(&self, h: usize) -> Result<()> {
        match self {
            WeightFn::Coordinate { index } if *index > h => Err(Error::InvalidSpec(format!(
                "coordinate weight index {index} exceeds lag {h}"
            ))),
            WeightFn::ProductPower { exponents } if exponents.len() != h + 1 => Err(Error::LengthMismatch {
                what: "weight exponents",
                got: exponents.len(),
                expected: h + 1,
            }),
            WeightFn::ProductPower { exponents } if exponents.iter().any(|q| !(*q >= 0.0)) => {
                Err(Error::InvalidSpec("weight exponents must be >= 0".into()))
            }
            _ => Ok(()),
        }
    }

    /// Warning text when some pairwise sum `q_i + q_i'` is not below `alpha / 2`.
    pub fn growth_warning(&self, h: usize, alpha: f64) -> Option<String> {
        let q = self.declared_exponents(h);
        let max = q.iter().cloned().fold(0.0, f64::max);
        (2.0 * max >= alpha / 2.0).then(|| {
            format!("weight growth: max pairwise exponent sum {} is not below alpha/2 = {}", 2.0 * max, alpha / 2.0)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailKind {
    Ted,
    Tep,
    WeightedTed,
    WeightedTep,
}

/// One evaluation of the (weighted) tail empirical distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TedValue {
    pub value: f64,
    pub threshold: ResolvedThreshold,
    /// Set when the threshold is at or above the sample maximum or `D = 0`;
    /// the value is then 0.
    pub degenerate: bool,
}

fn check_args(sample: &[f64], h: usize, v: &[f64]) -> Result<()> {
    if v.len() != h + 1 {
        return Err(Error::LengthMismatch { what: "argument v", got: v.len(), expected: h + 1 });
    }
    if v.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::InvalidSpec("tail function arguments must be > 0".into()));
    }
    if sample.len() <= h {
        return Err(Error::InvalidSpec(format!("need n > h, got n={} h={h}", sample.len())));
    }
    Ok(())
}

/// `sum_j psi(X_{j..=j+h} / u) 1{window exceeds u v}` over in-range windows.
fn window_sum(sample: &[f64], h: usize, v: &[f64], u: f64, psi: &WeightFn) -> f64 {
    let mut total = 0.0;
    let mut scaled = vec![0.0; h + 1];
    for window in sample.windows(h + 1) {
        if window.iter().zip(v).any(|(x, vi)| *x > u * vi) {
            total += match psi {
                WeightFn::Indicator => 1.0,
                _ => {
                    for (s, x) in scaled.iter_mut().zip(window) {
                        *s = x / u;
                    }
                    psi.eval(&scaled)
                }
            };
        }
    }
    total
}

/// Evaluates at an already resolved threshold and normalizer.
pub fn weighted_ted_at(
    sample: &[f64],
    h: usize,
    v: &[f64],
    threshold: ResolvedThreshold,
    psi: &WeightFn,
) -> Result<TedValue> {
    check_args(sample, h, v)?;
    psi.check_shape(h)?;
    let max = sample.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if threshold.u >= max || threshold.normalizer <= 0.0 {
        return Ok(TedValue { value: 0.0, threshold, degenerate: true });
    }
    let value = window_sum(sample, h, v, threshold.u, psi) / threshold.normalizer;
    Ok(TedValue { value, threshold, degenerate: false })
}

pub fn ted_multivariate(sample: &[f64], h: usize, v: &[f64], threshold: ThresholdSpec) -> Result<TedValue> {
    weighted_ted(sample, h, v, threshold, &WeightFn::Indicator)
}

pub fn weighted_ted(
    sample: &[f64],
    h: usize,
    v: &[f64],
    threshold: ThresholdSpec,
    psi: &WeightFn,
) -> Result<TedValue> {
    check_args(sample, h, v)?;
    let resolved = threshold.resolve(sample)?;
    weighted_ted_at(sample, h, v, resolved, psi)
}

/// Centering for the tail empirical process.
#[derive(Debug, Clone, PartialEq)]
pub enum Centering<'a> {
    /// Estimate the centering from an independent (typically much longer)
    /// path using the same tail fraction.
    Pilot(&'a [f64]),
    /// One value per grid point.
    Supplied(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub n: usize,
    pub normalizer: f64,
    pub u: f64,
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFunctionEval {
    pub kind: TailKind,
    pub h: usize,
    pub grid: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub normalization: Normalization,
}

fn eval_grid(
    sample: &[f64],
    h: usize,
    grid: &[Vec<f64>],
    threshold: ResolvedThreshold,
    psi: &WeightFn,
) -> Result<Vec<f64>> {
    grid.par_iter()
        .map(|v| weighted_ted_at(sample, h, v, threshold, psi).map(|t| t.value))
        .collect()
}

/// (Weighted) TED over a grid of arguments.
pub fn ted_grid(
    sample: &[f64],
    h: usize,
    grid: &[Vec<f64>],
    threshold: ThresholdSpec,
    psi: &WeightFn,
) -> Result<TailFunctionEval> {
    let resolved = threshold.resolve(sample)?;
    let values = eval_grid(sample, h, grid, resolved, psi)?;
    let kind = if matches!(psi, WeightFn::Indicator) { TailKind::Ted } else { TailKind::WeightedTed };
    Ok(TailFunctionEval {
        kind,
        h,
        grid: grid.to_vec(),
        values,
        normalization: Normalization { n: sample.len(), normalizer: resolved.normalizer, u: resolved.u, k: resolved.k },
    })
}

/// `sqrt(D) (T(v) - center(v))` over the grid.
pub fn tep(
    sample: &[f64],
    h: usize,
    grid: &[Vec<f64>],
    threshold: ThresholdSpec,
    psi: &WeightFn,
    centering: Centering<'_>,
) -> Result<TailFunctionEval> {
    let resolved = threshold.resolve(sample)?;
    let centers = match centering {
        Centering::Supplied(c) => {
            if c.len() != grid.len() {
                return Err(Error::LengthMismatch { what: "centering", got: c.len(), expected: grid.len() });
            }
            c
        }
        Centering::Pilot(pilot) => {
            let factor = pilot.len() as f64 / sample.len() as f64;
            let pilot_threshold = threshold.scaled(factor).resolve(pilot)?;
            eval_grid(pilot, h, grid, pilot_threshold, psi)?
        }
    };
    tep_at(sample, h, grid, resolved, psi, &centers)
}

/// Process values at a fixed threshold and normalizer.
pub fn tep_at(
    sample: &[f64],
    h: usize,
    grid: &[Vec<f64>],
    threshold: ResolvedThreshold,
    psi: &WeightFn,
    centers: &[f64],
) -> Result<TailFunctionEval> {
    if centers.len() != grid.len() {
        return Err(Error::LengthMismatch { what: "centering", got: centers.len(), expected: grid.len() });
    }
    let scale = threshold.normalizer.sqrt();
    let values = eval_grid(sample, h, grid, threshold, psi)?
        .into_iter()
        .zip(centers)
        .map(|(t, c)| scale * (t - c))
        .collect();
    let kind = if matches!(psi, WeightFn::Indicator) { TailKind::Tep } else { TailKind::WeightedTep };
    Ok(TailFunctionEval {
        kind,
        h,
        grid: grid.to_vec(),
        values,
        normalization: Normalization { n: sample.len(), normalizer: threshold.normalizer, u: threshold.u, k: threshold.k },
    })
}

impl TailFunctionEval {
    /// CSV with header `v_0,...,v_h,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..=self.h).map(|i| format!("v_{i}")).collect();
        header.push("value".into());
        w.write_record(&header)?;
        for (v, value) in self.grid.iter().zip(&self.values) {
            let mut row: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            row.push(value.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON sidecar with the normalization metadata.
    pub fn sidecar_json(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": self.kind,
            "h": self.h,
            "points": self.grid.len(),
            "normalization": self.normalization,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn order_statistic_small() {
        assert_eq!(order_statistic(&[5.0, 1.0, 3.0], 1).unwrap(), 3.0);
        assert_eq!(order_statistic(&[2.0, 2.0, 2.0], 1).unwrap(), 2.0);
        assert!(matches!(order_statistic(&[1.0, 2.0], 2), Err(Error::KOutOfRange { .. })));
        assert!(matches!(order_statistic(&[1.0, 2.0], 0), Err(Error::KOutOfRange { .. })));
    }

    #[test]
    fn level_hand_count() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        let t = ted_multivariate(&s, 0, &[1.0], ThresholdSpec::Level(3.0)).unwrap();
        assert_eq!(t.threshold.normalizer, 2.0);
        assert_eq!(t.value, 1.0);
        let w = weighted_ted(&s, 0, &[1.0], ThresholdSpec::Level(3.0), &WeightFn::Coordinate { index: 0 }).unwrap();
        assert!((w.value - 1.5).abs() < 1e-15);
    }

    #[test]
    fn nothing_exceeds() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        let t = ted_multivariate(&s, 1, &[2.0, 2.0], ThresholdSpec::Level(3.0)).unwrap();
        assert_eq!(t.value, 0.0);
        let neg = [-1.0, -2.0, -3.0];
        let w = weighted_ted(&neg, 0, &[1.0], ThresholdSpec::Level(0.5), &WeightFn::Coordinate { index: 0 }).unwrap();
        assert_eq!(w.value, 0.0);
        assert!(w.degenerate);
    }

    #[test]
    fn degenerate_threshold_returns_zero() {
        let t = ted_multivariate(&[1.0, 2.0, 3.0], 0, &[1.0], ThresholdSpec::Level(3.0)).unwrap();
        assert!(t.degenerate);
        assert_eq!(t.value, 0.0);
        let t = ted_multivariate(&[2.0, 2.0, 2.0], 0, &[1.0], ThresholdSpec::OrderStat(1)).unwrap();
        assert!(t.degenerate);
    }

    #[test]
    fn argument_validation() {
        let s = [1.0, 2.0, 3.0];
        assert!(matches!(ted_multivariate(&s, 1, &[1.0], ThresholdSpec::Level(1.0)), Err(Error::LengthMismatch { .. })));
        assert!(ted_multivariate(&s, 0, &[0.0], ThresholdSpec::Level(1.0)).is_err());
        assert!(ted_multivariate(&s, 3, &[1.0; 4], ThresholdSpec::Level(1.0)).is_err());
        assert!(ted_multivariate(&s, 0, &[1.0], ThresholdSpec::Level(-1.0)).is_err());
    }

    #[test]
    fn tep_self_centering_is_zero() {
        let s: Vec<f64> = (1..=50).map(|i| ((i * 37) % 50) as f64 + 0.5).collect();
        let grid = vec![vec![1.0, 1.0], vec![0.5, 2.0], vec![2.0, 1.5]];
        let th = ThresholdSpec::OrderStat(10);
        let own = ted_grid(&s, 1, &grid, th, &WeightFn::Indicator).unwrap();
        let p = tep(&s, 1, &grid, th, &WeightFn::Indicator, Centering::Supplied(own.values.clone())).unwrap();
        assert!(p.values.iter().all(|x| *x == 0.0));
        let p = tep(&s, 1, &grid, th, &WeightFn::Indicator, Centering::Pilot(&s)).unwrap();
        assert!(p.values.iter().all(|x| *x == 0.0));
        // Affine in the centering.
        let c = 0.3;
        let shifted = tep(&s, 1, &grid, th, &WeightFn::Indicator, Centering::Supplied(vec![c; 3])).unwrap();
        for (x, t) in shifted.values.iter().zip(&own.values) {
            assert!((x - 10f64.sqrt() * (t - c)).abs() < 1e-12);
        }
        assert!(matches!(
            tep(&s, 1, &grid, th, &WeightFn::Indicator, Centering::Supplied(vec![0.0; 2])),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn csv_layout() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        let e = ted_grid(&s, 1, &[vec![1.0, 1.0]], ThresholdSpec::Level(3.0), &WeightFn::Indicator).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "v_0,v_1,value");
        assert_eq!(e.sidecar_json()["normalization"]["normalizer"], 2.0);
    }

    #[test]
    fn growth_warning() {
        assert!(WeightFn::Coordinate { index: 0 }.growth_warning(0, 3.0).is_some());
        assert!(WeightFn::Coordinate { index: 0 }.growth_warning(0, 5.0).is_none());
        assert!(WeightFn::Indicator.growth_warning(2, 0.5).is_none());
    }

    fn naive_count(s: &[f64], h: usize, v: &[f64], u: f64) -> usize {
        let mut count = 0;
        for j in 0..s.len() - h {
            let mut hit = false;
            for i in 0..=h {
                if s[j + i] > u * v[i] {
                    hit = true;
                }
            }
            if hit {
                count += 1;
            }
        }
        count
    }

    proptest! {
        #[test]
        fn brute_force_equivalence(
            s in proptest::collection::vec(0.01f64..100.0, 5..200),
            h in 0usize..=3,
            v in proptest::collection::vec(0.2f64..3.0, 4),
            k in 1usize..5,
        ) {
            let v = &v[..=h];
            let t = ted_multivariate(&s, h, v, ThresholdSpec::OrderStat(k)).unwrap();
            if !t.degenerate {
                let expected = naive_count(&s, h, v, t.threshold.u) as f64 / k as f64;
                prop_assert_eq!(t.value, expected);
            }
        }

        #[test]
        fn monotone_in_v(
            s in proptest::collection::vec(0.01f64..100.0, 10..100),
            v in proptest::collection::vec(0.2f64..3.0, 2),
            bump in 0.0f64..2.0,
        ) {
            let th = ThresholdSpec::OrderStat(3);
            let psi = WeightFn::Coordinate { index: 1 };
            let w: Vec<f64> = v.iter().map(|x| x + bump).collect();
            let a = ted_multivariate(&s, 1, &v, th).unwrap().value;
            let b = ted_multivariate(&s, 1, &w, th).unwrap().value;
            prop_assert!(a >= b);
            let a = weighted_ted(&s, 1, &v, th, &psi).unwrap().value;
            let b = weighted_ted(&s, 1, &w, th, &psi).unwrap().value;
            prop_assert!(a >= b);
        }

        #[test]
        fn indicator_weight_reduces(
            s in proptest::collection::vec(-5f64..50.0, 5..60),
            h in 0usize..=2,
        ) {
            let v = vec![1.0; h + 1];
            let th = ThresholdSpec::Level(2.0);
            let a = ted_multivariate(&s, h, &v, th).unwrap().value;
            let b = weighted_ted(&s, h, &v, th, &WeightFn::Indicator).unwrap().value;
            prop_assert_eq!(a, b);
        }

        #[test]
        fn scale_equivariance(
            s in proptest::collection::vec(0.01f64..100.0, 5..80),
            c in prop_oneof![Just(0.5f64), Just(2.0), Just(4.0), Just(0.125)],
        ) {
            let scaled: Vec<f64> = s.iter().map(|x| x * c).collect();
            let a = ted_multivariate(&s, 1, &[1.0, 1.5], ThresholdSpec::Level(10.0)).unwrap();
            let b = ted_multivariate(&scaled, 1, &[1.0, 1.5], ThresholdSpec::Level(10.0 * c)).unwrap();
            prop_assert_eq!(a.value, b.value);
        }

        #[test]
        fn unit_normalization_without_ties(
            mut s in proptest::collection::btree_set(0u32..100_000, 10..200)
                .prop_map(|b| b.into_iter().map(|x| x as f64 + 0.5).collect::<Vec<_>>()),
            k in 1usize..9,
        ) {
            s.reverse();
            let t = ted_multivariate(&s, 0, &[1.0], ThresholdSpec::OrderStat(k)).unwrap();
            prop_assert_eq!(t.value, 1.0);
            prop_assert!(t.threshold.normalizer > 0.0);
        }
    }
}
