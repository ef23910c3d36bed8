use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Check, InnovationDist, IntegerLaw, IntegerPareto, PathSample, Simulator, ValidationReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    Stationary,
    Fixed(u64),
}

/// The descent/renewal chain: `X_j = X_{j-1} - 1` while above 1, otherwise a
/// fresh draw `Z_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalChainSpec {
    pub z_dist: InnovationDist,
    pub initial: InitialState,
}

impl RenewalChainSpec {
    pub fn new(beta: f64, initial: InitialState) -> Self {
        RenewalChainSpec { z_dist: InnovationDist::IntegerPareto { beta }, initial }
    }

    pub fn law(&self) -> Result<IntegerPareto> {
        match self.z_dist {
            InnovationDist::IntegerPareto { beta } if beta > 1.0 && beta.is_finite() => Ok(IntegerPareto { beta }),
            InnovationDist::IntegerPareto { beta } => {
                Err(Error::InvalidSpec(format!("renewal chain needs beta > 1, got {beta}")))
            }
            _ => Err(Error::InvalidSpec("renewal chain z_dist must be integer_pareto".into())),
        }
    }

    /// `P(Z > x)` for real `x >= 0`.
    pub fn z_survival(&self, x: f64) -> Result<f64> {
        Ok(self.law()?.survival(x.max(0.0).floor() as u64))
    }

    /// `P(X_0 > x)` under the stationary law, for real `x >= 0`.
    pub fn stationary_survival(&self, x: f64) -> Result<f64> {
        Ok(stationary_survival(&self.law()?, x.max(0.0).floor() as u64))
    }
}

/// Stationary law `pi(n) = P(Z >= n) / E[Z]` tabulated on `1..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryPmf {
    /// `probs[i]` is `pi(i + 1)`.
    pub probs: Vec<f64>,
    /// `sum_{n > n_max} pi(n)`.
    pub tail_mass: f64,
    pub mean_z: f64,
}

impl StationaryPmf {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.tail_mass
    }
}

pub fn stationary_pmf<L: IntegerLaw>(law: &L, n_max: u64) -> StationaryPmf {
    let mean_z = law.mean();
    let probs = (1..=n_max).map(|n| law.survival(n - 1) / mean_z).collect();
    // sum_{n > n_max} P(Z >= n) = sum_{m >= n_max} P(Z > m).
    let tail_mass = law.survival_sum_from(n_max) / mean_z;
    StationaryPmf { probs, tail_mass, mean_z }
}

pub fn renewal_stationary_pmf(spec: &RenewalChainSpec, n_max: u64) -> Result<StationaryPmf> {
    Ok(stationary_pmf(&spec.law()?, n_max))
}

/// `P(X_0 > n)` under the stationary law.
pub(crate) fn stationary_survival<L: IntegerLaw>(law: &L, n: u64) -> f64 {
    law.survival_sum_from(n) / law.mean()
}

/// Inverse-CDF draw from the stationary law: smallest `n >= 1` with
/// `P(X_0 > n) < V`, located by doubling then bisection.
fn sample_stationary<L: IntegerLaw, R: Rng + ?Sized>(law: &L, rng: &mut R) -> u64 {
    let v = 1.0 - rng.random::<f64>();
    let below = |n: u64| stationary_survival(law, n) < v;
    let mut hi = 1u64;
    while !below(hi) {
        hi = hi.saturating_mul(2);
        if hi == u64::MAX {
            return hi;
        }
    }
    let mut lo = hi / 2; // below(lo) is false or lo == 0
    if lo == 0 {
        return 1;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if below(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Runs the chain from `x0`, drawing lifetimes from `draw` on each visit to 1.
/// The output starts with `x0` itself.
pub fn renewal_recursion<F: FnMut() -> u64>(x0: u64, n: usize, mut draw: F) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut x = x0.max(1);
    for step in 0..n {
        if step > 0 {
            x = if x > 1 { x - 1 } else { draw() };
        }
        out.push(x as f64);
    }
    out
}

pub fn simulate_renewal_chain(spec: &RenewalChainSpec, n: usize, seed: u64) -> Result<PathSample> {
    super::ModelSpec::Renewal(spec.clone()).simulate(n, seed, Some(0))
}

impl Simulator for RenewalChainSpec {
    fn name(&self) -> &'static str {
        "renewal"
    }

    fn validate(&self) -> Result<ValidationReport> {
        let law = self.law()?;
        if let InitialState::Fixed(0) = self.initial {
            return Err(Error::InvalidSpec("fixed initial state must be >= 1".into()));
        }
        let mut report = ValidationReport::new("renewal", vec![Check {
            name: "beta > 1".into(),
            value: law.beta,
            limit: 1.0,
            passed: law.beta > 1.0,
        }]);
        report.info.insert("mean_z".into(), law.mean());
        report.info.insert("lambda".into(), 1.0 / law.mean());
        report.info.insert("stationary_tail_index".into(), law.beta - 1.0);
        Ok(report)
    }

    fn default_burn_in(&self) -> usize {
        0
    }

    fn generate(&self, n: usize, burn_in: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let law = self.law().expect("validated spec");
        let x0 = match self.initial {
            InitialState::Stationary => sample_stationary(&law, rng),
            InitialState::Fixed(m) => m,
        };
        let mut path = renewal_recursion(x0, n + burn_in, || law.sample(rng));
        path.drain(..burn_in);
        path
    }
}
