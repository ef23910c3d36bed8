//! The three simulatable models and their analytic validity checks.

mod ar;
mod innovation;
mod renewal;
mod tarch;

pub use ar::{ar_recursion, simulate_ar, validate_ar, ArSpec, ArValidation};
pub use innovation::{
    integer_pareto_quantile, sample_integer_pareto, InnovationDist, IntegerLaw, IntegerPareto,
    TabulatedLaw,
};
pub use renewal::{
    renewal_recursion, renewal_stationary_pmf, simulate_renewal_chain, stationary_pmf,
    InitialState, RenewalChainSpec, StationaryPmf,
};
pub use tarch::{
    simulate_tarch, tarch_lyapunov, tarch_recursion, tarch_tail_index, LyapunovExponent,
    TarchParams, TarchSpec, TAIL_INDEX_BRACKET,
};

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// One named check in a validation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    pub fn less_than(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check { name: name.into(), value, limit, passed: value < limit }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub model: String,
    pub accepted: bool,
    pub checks: Vec<Check>,
    /// Informational quantities (e.g. a solved tail index).
    #[serde(default)]
    pub info: BTreeMap<String, f64>,
}

impl ValidationReport {
    pub fn new(model: &str, checks: Vec<Check>) -> Self {
        let accepted = checks.iter().all(|c| c.passed);
        ValidationReport { model: model.to_owned(), accepted, checks, info: BTreeMap::new() }
    }

    /// Names of failed checks, comma separated.
    pub fn failures(&self) -> String {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} (value {})", c.name, c.value))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// Common interface to the simulators.
pub trait Simulator: Send + Sync {
    fn name(&self) -> &'static str;

    /// Runs the analytic checks. Never mutates the spec.
    fn validate(&self) -> Result<ValidationReport>;

    fn default_burn_in(&self) -> usize;

    /// Produces `n` values after discarding `burn_in` steps. Assumes the spec
    /// has been validated.
    fn generate(&self, n: usize, burn_in: usize, rng: &mut ChaCha8Rng) -> Vec<f64>;
}

/// Tagged model description, `{"model": "ar" | "tarch" | "renewal", ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    Ar(ArSpec),
    Tarch(TarchSpec),
    Renewal(RenewalChainSpec),
}

impl ModelSpec {
    pub fn simulator(&self) -> &dyn Simulator {
        match self {
            ModelSpec::Ar(s) => s,
            ModelSpec::Tarch(s) => s,
            ModelSpec::Renewal(s) => s,
        }
    }

    pub fn name(&self) -> &'static str {
        self.simulator().name()
    }

    pub fn validate(&self) -> Result<ValidationReport> {
        self.simulator().validate()
    }

    /// Validates and wraps the spec; rejected specs become
    /// [`Error::InvalidSpec`] naming the failed conditions.
    pub fn validated(self) -> Result<ValidModel> {
        let report = self.validate()?;
        if !report.accepted {
            return Err(Error::InvalidSpec(format!(
                "{} spec rejected: {}",
                self.name(),
                report.failures()
            )));
        }
        Ok(ValidModel { spec: self, report })
    }

    /// Validate-then-simulate convenience.
    pub fn simulate(&self, n: usize, seed: u64, burn_in: Option<usize>) -> Result<PathSample> {
        self.clone().validated()?.simulate(n, seed, burn_in)
    }
}

/// A model spec that passed validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidModel {
    spec: ModelSpec,
    report: ValidationReport,
}

impl ValidModel {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    pub fn simulate(&self, n: usize, seed: u64, burn_in: Option<usize>) -> Result<PathSample> {
        if n == 0 {
            return Err(Error::InvalidSpec("path length n must be >= 1".into()));
        }
        let sim = self.spec.simulator();
        let burn_in = burn_in.unwrap_or_else(|| sim.default_burn_in());
        let mut rng = rng_from_seed(seed);
        let values = sim.generate(n, burn_in, &mut rng);
        PathSample::new(values, seed, burn_in, Some(self.spec.clone()))
    }
}

/// A simulated (or loaded) path with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    values: Vec<f64>,
    pub seed: u64,
    pub burn_in: usize,
    pub model: Option<ModelSpec>,
}

impl PathSample {
    pub fn new(values: Vec<f64>, seed: u64, burn_in: usize, model: Option<ModelSpec>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSpec("path must contain at least one value".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec(format!("non-finite value at index {i}")));
        }
        Ok(PathSample { values, seed, burn_in, model })
    }

    /// Wraps externally supplied data.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Self::new(values, 0, 0, None)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl AsRef<[f64]> for PathSample {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}
