//! Seeded, replicated Monte Carlo experiments.
//!
//! Replication `i` draws its path from `derive_seed(master_seed, i)`. Pilot
//! paths used for centering come from a reserved stream, so they never
//! coincide with a replication. Records are collected in index order and
//! every summary is a pure function of them, which makes a report
//! independent of the worker count.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Estimator, EstimatorParams, EstimatorRegistry};
use crate::models::{ModelSpec, RenewalChainSpec, ValidModel};
use crate::rng::{derive_seed, PILOT_STREAM};
use crate::stats::{self, JarqueBera, Summary};
use crate::tailcore::{weighted_ted_at, ResolvedThreshold, ThresholdSpec, WeightFn};

/// Largest tolerated fraction of failed replications.
pub const FAILURE_BUDGET: f64 = 0.05;

/// Jarque-Bera p-values below this reject normality.
pub const NORMALITY_P_FLOOR: f64 = 0.01;

pub const DEFAULT_PILOT_MULTIPLIER: usize = 100;

fn default_pilot_multiplier() -> usize {
    DEFAULT_PILOT_MULTIPLIER
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationRule {
    /// `sqrt(k)`, or `sqrt(D)` for tail empirical statistics.
    #[default]
    SqrtK,
    /// `sqrt(n P(Z > u))` with `Z` the renewal lifetime.
    SqrtNfz,
}

/// How a tail empirical statistic fixes its threshold and normalizer `D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelRule {
    /// Resolve on each replication.
    #[default]
    Sample,
    /// Take `u` and the exceedance rate from the pilot path, so every
    /// replication uses `u` and `D = n * rate`.
    PilotLevel,
    /// A level threshold with `D = n P(X_0 > u)` under the renewal chain's
    /// stationary law.
    Stationary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StatisticSpec {
    Estimator {
        name: String,
        k: usize,
        #[serde(default)]
        h: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p: Option<f64>,
    },
    Tep {
        #[serde(default)]
        h: usize,
        grid: Vec<Vec<f64>>,
        #[serde(default)]
        weight: WeightFn,
        threshold: ThresholdSpec,
        #[serde(default)]
        level_rule: LevelRule,
    },
}

impl StatisticSpec {
    pub fn dimension(&self) -> usize {
        match self {
            StatisticSpec::Estimator { .. } => 1,
            StatisticSpec::Tep { grid, .. } => grid.len(),
        }
    }

    pub fn lag(&self) -> usize {
        match self {
            StatisticSpec::Estimator { h, .. } | StatisticSpec::Tep { h, .. } => *h,
        }
    }

    /// The same statistic with its order-statistic count replaced by `k`.
    pub fn with_k(&self, new_k: usize) -> Result<StatisticSpec> {
        let mut out = self.clone();
        match &mut out {
            StatisticSpec::Estimator { k, .. } => *k = new_k,
            StatisticSpec::Tep { threshold: threshold @ ThresholdSpec::OrderStat(_), .. } => {
                *threshold = ThresholdSpec::OrderStat(new_k)
            }
            StatisticSpec::Tep { .. } => {
                return Err(Error::InvalidSpec("k sweep needs an order_stat threshold".into()));
            }
        }
        Ok(out)
    }

    fn needs_pilot_level(&self) -> bool {
        matches!(self, StatisticSpec::Tep { level_rule: LevelRule::PilotLevel, .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetQuantity {
    Mean,
    Variance,
    Covariance,
}

/// A theoretical value for one summary of the normalized deviations, with
/// either a relative tolerance or an absolute acceptance range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryTarget {
    pub quantity: TargetQuantity,
    /// One component for mean and variance, two for covariance.
    #[serde(default)]
    pub components: Vec<usize>,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<(f64, f64)>,
    /// Also require the Jarque-Bera p-value of the first component to stay
    /// above the floor.
    #[serde(default)]
    pub require_normality: bool,
}

impl TheoryTarget {
    fn component(&self, i: usize) -> usize {
        self.components.get(i).copied().unwrap_or(0)
    }

    fn check_shape(&self, dimension: usize) -> Result<()> {
        let needed = if self.quantity == TargetQuantity::Covariance { 2 } else { 1 };
        if self.components.len() > needed {
            return Err(Error::InvalidSpec(format!("target takes at most {needed} components")));
        }
        if self.quantity == TargetQuantity::Covariance && self.components.len() != 2 {
            return Err(Error::InvalidSpec("covariance target needs two components".into()));
        }
        if (0..needed).any(|i| self.component(i) >= dimension) {
            return Err(Error::InvalidSpec(format!("target component out of range for dimension {dimension}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetOutcome {
    pub observed: f64,
    pub relative_error: f64,
    /// `None` when the target has neither a tolerance nor a range.
    pub within_tolerance: Option<bool>,
    pub normality_p_value: f64,
    pub normality_ok: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    pub statistic: StatisticSpec,
    pub replications: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub normalization: NormalizationRule,
    #[serde(default = "default_pilot_multiplier")]
    pub pilot_multiplier: usize,
    /// Known centering values; a pilot path is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TheoryTarget>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidSpec("replications must be >= 1".into()));
        }
        if self.n <= self.statistic.lag() {
            return Err(Error::InvalidSpec(format!("need n > h, got n={} h={}", self.n, self.statistic.lag())));
        }
        if self.pilot_multiplier == 0 {
            return Err(Error::InvalidSpec("pilot_multiplier must be >= 1".into()));
        }
        let dim = self.statistic.dimension();
        if dim == 0 {
            return Err(Error::InvalidSpec("statistic grid is empty".into()));
        }
        if let Some(c) = &self.center {
            if c.len() != dim {
                return Err(Error::LengthMismatch { what: "center", got: c.len(), expected: dim });
            }
        }
        if let Some(t) = &self.target {
            t.check_shape(dim)?;
        }
        let renewal = matches!(self.model, ModelSpec::Renewal(_));
        if let StatisticSpec::Tep { level_rule: LevelRule::Stationary, threshold, .. } = &self.statistic {
            if !renewal || !matches!(threshold, ThresholdSpec::Level(_)) {
                return Err(Error::InvalidSpec(
                    "stationary level rule needs a renewal model and a level threshold".into(),
                ));
            }
        }
        if self.normalization == NormalizationRule::SqrtNfz {
            let fixed_level = match &self.statistic {
                StatisticSpec::Tep { level_rule, threshold, .. } => {
                    *level_rule != LevelRule::Sample || matches!(threshold, ThresholdSpec::Level(_))
                }
                StatisticSpec::Estimator { .. } => false,
            };
            if !renewal || !fixed_level {
                return Err(Error::InvalidSpec(
                    "sqrt_nfz normalization needs a renewal model and a fixed threshold level".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One evaluation of a statistic on one path.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub values: Vec<f64>,
    /// `k` for estimators, the normalizer `D` for tail empirical statistics.
    pub effective_k: f64,
    pub level: f64,
}

/// A scalar or vector statistic computed on each replication.
pub trait Statistic: Send + Sync {
    fn label(&self) -> String;
    fn dimension(&self) -> usize;
    fn evaluate(&self, sample: &[f64]) -> Result<Evaluation>;
}

struct EstimatorStatistic {
    estimator: Box<dyn Estimator>,
    params: EstimatorParams,
}

impl Statistic for EstimatorStatistic {
    fn label(&self) -> String {
        self.estimator.name().to_owned()
    }

    fn dimension(&self) -> usize {
        1
    }

    fn evaluate(&self, sample: &[f64]) -> Result<Evaluation> {
        let rec = self.estimator.estimate(sample, &self.params)?;
        let level = rec.auxiliary.get("threshold").copied().unwrap_or(f64::NAN);
        Ok(Evaluation { values: vec![rec.value], effective_k: rec.k as f64, level })
    }
}

#[derive(Debug, Clone, Copy)]
struct FixedLevel {
    u: f64,
    rate: f64,
}

struct TepStatistic {
    h: usize,
    grid: Vec<Vec<f64>>,
    psi: WeightFn,
    threshold: ThresholdSpec,
    fixed: Option<FixedLevel>,
}

impl Statistic for TepStatistic {
    fn label(&self) -> String {
        if matches!(self.psi, WeightFn::Indicator) { "ted".into() } else { "weighted_ted".into() }
    }

    fn dimension(&self) -> usize {
        self.grid.len()
    }

    fn evaluate(&self, sample: &[f64]) -> Result<Evaluation> {
        let resolved = match self.fixed {
            Some(FixedLevel { u, rate }) => ResolvedThreshold { u, normalizer: rate * sample.len() as f64, k: None },
            None => self.threshold.resolve(sample)?,
        };
        let mut values = Vec::with_capacity(self.grid.len());
        for v in &self.grid {
            let t = weighted_ted_at(sample, self.h, v, resolved, &self.psi)?;
            if t.degenerate && self.fixed.is_none() {
                return Err(Error::ZeroExceedances(resolved.u));
            }
            values.push(t.value);
        }
        Ok(Evaluation { values, effective_k: resolved.normalizer, level: resolved.u })
    }
}

fn build_statistic(
    spec: &StatisticSpec,
    model: &ModelSpec,
    scale: f64,
    fixed: Option<FixedLevel>,
) -> Result<Box<dyn Statistic>> {
    match spec {
        StatisticSpec::Estimator { name, k, h, p } => {
            let estimator = EstimatorRegistry::default().take(name)?;
            let params = EstimatorParams { k: *k, h: *h, p: *p }.scaled(scale);
            Ok(Box::new(EstimatorStatistic { estimator, params }))
        }
        StatisticSpec::Tep { h, grid, weight, threshold, level_rule } => {
            let fixed = match level_rule {
                LevelRule::Sample => None,
                LevelRule::PilotLevel => {
                    Some(fixed.ok_or_else(|| Error::InvalidSpec("pilot level was not resolved".into()))?)
                }
                LevelRule::Stationary => {
                    let (ModelSpec::Renewal(chain), ThresholdSpec::Level(u)) = (model, threshold) else {
                        return Err(Error::InvalidSpec("stationary level rule needs a renewal level".into()));
                    };
                    Some(FixedLevel { u: *u, rate: chain.stationary_survival(*u)? })
                }
            };
            Ok(Box::new(TepStatistic {
                h: *h,
                grid: grid.clone(),
                psi: weight.clone(),
                threshold: threshold.scaled(scale),
                fixed,
            }))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterSource {
    Supplied,
    Pilot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub index: usize,
    pub seed: u64,
    pub values: Vec<f64>,
    pub deviations: Vec<f64>,
    pub sqrt_k_factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sqrt_nfz_factor: Option<f64>,
    pub level: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ReplicationRecord {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// A config with its model validated, its centering resolved and its
/// statistic built, ready to run replications.
pub struct PreparedExperiment {
    config: ExperimentConfig,
    model: ValidModel,
    statistic: Box<dyn Statistic>,
    centers: Vec<f64>,
    center_source: CenterSource,
    pilot_seed: Option<u64>,
    pilot_len: Option<usize>,
    nfz: Option<f64>,
}

impl PreparedExperiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let model = config.model.clone().validated()?;
        let needs_pilot = config.center.is_none() || config.statistic.needs_pilot_level();
        let pilot_len = config.n * config.pilot_multiplier;
        let pilot_seed = derive_seed(config.master_seed, PILOT_STREAM);
        let pilot = if needs_pilot { Some(model.simulate(pilot_len, pilot_seed, config.burn_in)?) } else { None };
        let scale = config.pilot_multiplier as f64;

        let fixed = match (&config.statistic, &pilot) {
            (StatisticSpec::Tep { threshold, level_rule: LevelRule::PilotLevel, .. }, Some(pilot)) => {
                let u = threshold.scaled(scale).resolve(pilot.values())?.u;
                let count = pilot.values().iter().filter(|x| **x > u).count();
                if count == 0 {
                    return Err(Error::ZeroExceedances(u));
                }
                Some(FixedLevel { u, rate: count as f64 / pilot.len() as f64 })
            }
            _ => None,
        };

        let statistic = build_statistic(&config.statistic, &config.model, 1.0, fixed)?;
        let (centers, center_source) = match (&config.center, &pilot) {
            (Some(c), _) => (c.clone(), CenterSource::Supplied),
            (None, Some(pilot)) => {
                let pilot_stat = build_statistic(&config.statistic, &config.model, scale, fixed)?;
                (pilot_stat.evaluate(pilot.values())?.values, CenterSource::Pilot)
            }
            (None, None) => unreachable!("a pilot is simulated whenever no center is supplied"),
        };

        let nfz = match &config.model {
            ModelSpec::Renewal(chain) => fixed_level_of(&config.statistic, fixed)
                .map(|u| chain_nfz(chain, config.n, u))
                .transpose()?,
            _ => None,
        };

        Ok(PreparedExperiment {
            model,
            statistic,
            centers,
            center_source,
            pilot_seed: needs_pilot.then_some(pilot_seed),
            pilot_len: needs_pilot.then_some(pilot_len),
            nfz,
            config,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Runs replication `index` in isolation.
    pub fn replication(&self, index: usize) -> ReplicationRecord {
        let seed = derive_seed(self.config.master_seed, index as u64);
        let outcome = self
            .model
            .simulate(self.config.n, seed, self.config.burn_in)
            .and_then(|path| self.statistic.evaluate(path.values()));
        match outcome {
            Ok(eval) => {
                let sqrt_k = eval.effective_k.sqrt();
                let factor = match self.config.normalization {
                    NormalizationRule::SqrtK => sqrt_k,
                    NormalizationRule::SqrtNfz => self.nfz.expect("validated config").sqrt(),
                };
                let deviations = eval.values.iter().zip(&self.centers).map(|(v, c)| factor * (v - c)).collect();
                ReplicationRecord {
                    index,
                    seed,
                    values: eval.values,
                    deviations,
                    sqrt_k_factor: sqrt_k,
                    sqrt_nfz_factor: self.nfz.map(f64::sqrt),
                    level: eval.level,
                    error: None,
                }
            }
            Err(e) => ReplicationRecord {
                index,
                seed,
                values: Vec::new(),
                deviations: Vec::new(),
                sqrt_k_factor: f64::NAN,
                sqrt_nfz_factor: None,
                level: f64::NAN,
                error: Some(e.to_string()),
            },
        }
    }

    /// Runs every replication, on a dedicated pool of `workers` threads when given.
    pub fn run(&self, workers: Option<usize>) -> Result<McReport> {
        let start = Instant::now();
        let reps = self.config.replications;
        let records: Vec<ReplicationRecord> = match workers {
            Some(w) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(w.max(1))
                    .build()
                    .map_err(|e| Error::InvalidSpec(format!("cannot build worker pool: {e}")))?;
                pool.install(|| (0..reps).into_par_iter().map(|i| self.replication(i)).collect())
            }
            None => (0..reps).into_par_iter().map(|i| self.replication(i)).collect(),
        };
        let mut report = McReport::from_records(
            self.statistic.label(),
            self.config.clone(),
            self.centers.clone(),
            self.center_source,
            self.pilot_seed,
            self.pilot_len,
            records,
        )?;
        report.wall_clock_secs = start.elapsed().as_secs_f64();
        Ok(report)
    }
}

fn fixed_level_of(spec: &StatisticSpec, fixed: Option<FixedLevel>) -> Option<f64> {
    match (spec, fixed) {
        (_, Some(f)) => Some(f.u),
        (StatisticSpec::Tep { threshold: ThresholdSpec::Level(u), .. }, None) => Some(*u),
        _ => None,
    }
}

fn chain_nfz(chain: &RenewalChainSpec, n: usize, u: f64) -> Result<f64> {
    Ok(n as f64 * chain.z_survival(u)?)
}

/// Full output of a Monte Carlo experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McReport {
    pub statistic: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub centers: Vec<f64>,
    pub center_source: CenterSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot_len: Option<usize>,
    pub records: Vec<ReplicationRecord>,
    pub failures: usize,
    /// Summaries of the normalized deviations, one per component.
    pub components: Vec<Summary>,
    /// Means of the raw statistic values, one per component.
    pub value_means: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetOutcome>,
    /// Not serialized and ignored by equality.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl PartialEq for McReport {
    fn eq(&self, other: &Self) -> bool {
        self.statistic == other.statistic
            && self.version == other.version
            && self.config == other.config
            && self.centers == other.centers
            && self.center_source == other.center_source
            && self.pilot_seed == other.pilot_seed
            && self.pilot_len == other.pilot_len
            && self.records == other.records
            && self.failures == other.failures
            && self.components == other.components
            && self.value_means == other.value_means
            && self.covariance == other.covariance
            && self.target == other.target
    }
}

impl McReport {
    /// Aggregates per-replication records (taken in index order).
    pub fn from_records(
        statistic: String,
        config: ExperimentConfig,
        centers: Vec<f64>,
        center_source: CenterSource,
        pilot_seed: Option<u64>,
        pilot_len: Option<usize>,
        mut records: Vec<ReplicationRecord>,
    ) -> Result<McReport> {
        records.sort_by_key(|r| r.index);
        let total = records.len();
        let failures = records.iter().filter(|r| !r.ok()).count();
        if total == 0 || failures == total || failures as f64 > FAILURE_BUDGET * total as f64 {
            return Err(Error::ReplicationBudget { failed: failures, total });
        }
        let dim = centers.len();
        let ok: Vec<&ReplicationRecord> = records.iter().filter(|r| r.ok()).collect();
        let column = |i: usize, raw: bool| -> Vec<f64> {
            ok.iter().map(|r| if raw { r.values[i] } else { r.deviations[i] }).collect()
        };
        let devs: Vec<Vec<f64>> = (0..dim).map(|i| column(i, false)).collect();
        let components = devs.iter().map(|d| Summary::of(d)).collect::<Vec<_>>();
        let value_means = (0..dim).map(|i| stats::mean(&column(i, true))).collect();
        let covariance = (0..dim)
            .map(|a| (0..dim).map(|b| stats::covariance(&devs[a], &devs[b])).collect())
            .collect::<Vec<Vec<f64>>>();
        let target = config.target.as_ref().map(|t| evaluate_target(t, &components, &covariance));
        Ok(McReport {
            statistic,
            version: env!("CARGO_PKG_VERSION").to_owned(),
            config,
            centers,
            center_source,
            pilot_seed,
            pilot_len,
            records,
            failures,
            components,
            value_means,
            covariance,
            target,
            wall_clock_secs: 0.0,
        })
    }

    /// Re-aggregates over the records whose index satisfies `keep`.
    pub fn restricted<F: Fn(usize) -> bool>(&self, keep: F) -> Result<McReport> {
        let records = self.records.iter().filter(|r| keep(r.index)).cloned().collect();
        McReport::from_records(
            self.statistic.clone(),
            self.config.clone(),
            self.centers.clone(),
            self.center_source,
            self.pilot_seed,
            self.pilot_len,
            records,
        )
    }

    pub fn deviations(&self, component: usize) -> Vec<f64> {
        self.records.iter().filter(|r| r.ok()).map(|r| r.deviations[component]).collect()
    }

    pub fn values(&self, component: usize) -> Vec<f64> {
        self.records.iter().filter(|r| r.ok()).map(|r| r.values[component]).collect()
    }

    /// `false` only when a configured target is violated.
    pub fn target_passed(&self) -> bool {
        self.target.as_ref().is_none_or(|t| t.passed)
    }

    /// CSV with header `index,seed,value_0..,deviation_0..,error`.
    pub fn write_records_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let dim = self.centers.len();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["index".to_string(), "seed".to_string()];
        header.extend((0..dim).map(|i| format!("value_{i}")));
        header.extend((0..dim).map(|i| format!("deviation_{i}")));
        header.push("error".into());
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.index.to_string(), r.seed.to_string()];
            if r.ok() {
                row.extend(r.values.iter().map(|v| v.to_string()));
                row.extend(r.deviations.iter().map(|v| v.to_string()));
            } else {
                row.extend(std::iter::repeat_n(String::new(), 2 * dim));
            }
            row.push(r.error.clone().unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn evaluate_target(t: &TheoryTarget, components: &[Summary], covariance: &[Vec<f64>]) -> TargetOutcome {
    let observed = match t.quantity {
        TargetQuantity::Mean => components[t.component(0)].mean,
        TargetQuantity::Variance => components[t.component(0)].variance,
        TargetQuantity::Covariance => covariance[t.component(0)][t.component(1)],
    };
    let relative_error = (observed - t.value) / t.value.abs();
    let within_tolerance = match (t.range, t.rel_tol) {
        (Some((lo, hi)), _) => Some(lo <= observed && observed <= hi),
        (None, Some(tol)) => Some(relative_error.abs() <= tol),
        (None, None) => None,
    };
    let normality_p_value = components[t.component(0)].jarque_bera.p_value;
    let normality_ok = normality_p_value >= NORMALITY_P_FLOOR;
    let passed = within_tolerance.unwrap_or(true) && (!t.require_normality || normality_ok);
    TargetOutcome { observed, relative_error, within_tolerance, normality_p_value, normality_ok, passed }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<McReport> {
    PreparedExperiment::new(config.clone())?.run(None)
}

pub fn run_experiment_with_workers(config: &ExperimentConfig, workers: usize) -> Result<McReport> {
    PreparedExperiment::new(config.clone())?.run(Some(workers))
}

/// One experiment per `k`, all sharing the master seed so every cell sees
/// the same paths.
pub fn sweep_k(config: &ExperimentConfig, k_grid: &[usize]) -> Result<Vec<McReport>> {
    k_grid
        .iter()
        .map(|&k| {
            let cell = ExperimentConfig { statistic: config.statistic.with_k(k)?, ..config.clone() };
            run_experiment(&cell)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `n P(Z > u) -> 0`.
    Degenerate,
    /// `1 < beta < 2` and `n P(Z > u) -> infinity`.
    Stable,
    /// `beta > 2` and `n P(Z > u) -> infinity`.
    Gaussian,
}

/// Regime of the renewal chain's tail empirical process for thresholds
/// `u = n^exponent`, where `n P(Z > u)` behaves like `n^{1 - exponent * beta}`.
pub fn regime(beta: f64, exponent: f64) -> Result<Regime> {
    if !(beta > 1.0) || !(exponent > 0.0 && exponent < 1.0) {
        return Err(Error::InvalidSpec(format!("need beta > 1 and 0 < exponent < 1, got {beta}, {exponent}")));
    }
    let rate = 1.0 - exponent * beta;
    if rate < 0.0 {
        Ok(Regime::Degenerate)
    } else if rate == 0.0 {
        Err(Error::OutOfRegime(format!("exponent * beta = 1 leaves n P(Z > u) bounded (beta={beta})")))
    } else if beta > 2.0 {
        Ok(Regime::Gaussian)
    } else if beta < 2.0 {
        Ok(Regime::Stable)
    } else {
        Err(Error::OutOfRegime("beta = 2 separates the stable and Gaussian regimes".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleConfig {
    pub chain: RenewalChainSpec,
    pub n: usize,
    /// Threshold `u = n^exponent`.
    pub exponent: f64,
    pub s_grid: Vec<f64>,
    pub replications: usize,
    pub master_seed: u64,
    #[serde(default = "default_pilot_multiplier")]
    pub pilot_multiplier: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableDiagnostics {
    /// `n^{1/beta}`, so that `n P(Z > a_n) = 1` up to integer rounding.
    pub a_n: f64,
    /// Deviations `(n P(X_0 > u) / a_n) (T(s_0) - E T(s_0))` at the first grid point.
    pub deviations: Vec<f64>,
    pub hill_k: usize,
    pub tail_index: f64,
    pub jarque_bera: JarqueBera,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub regime: Regime,
    pub beta: f64,
    pub exponent: f64,
    pub u: f64,
    /// `n P(Z > u)`.
    pub n_fz: f64,
    /// `n P(X_0 > u)`.
    pub n_fx: f64,
    /// Exact `E T(s) = P(X_0 > u s) / P(X_0 > u)` over the grid.
    pub exact_means: Vec<f64>,
    /// Fraction of replications with some nonzero tail empirical value.
    pub nonzero_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theory_covariance: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stable: Option<StableDiagnostics>,
    pub mc: McReport,
}

impl CounterexampleConfig {
    /// The Monte Carlo experiment behind the counterexample report: the
    /// tail empirical distribution at level `u` with `D = n P(X_0 > u)`,
    /// scaled by `sqrt(n P(Z > u))`. The Gaussian regime is centered at a
    /// pilot estimate, the others at the exact mean.
    pub fn experiment(&self) -> Result<(Regime, ExperimentConfig)> {
        let beta = self.chain.law()?.beta;
        let regime = regime(beta, self.exponent)?;
        if self.s_grid.is_empty() || self.s_grid.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidSpec("s_grid must be nonempty and positive".into()));
        }
        let u = (self.n as f64).powf(self.exponent);
        let center = match regime {
            Regime::Gaussian => None,
            _ => Some(self.exact_means(u)?),
        };
        let config = ExperimentConfig {
            model: ModelSpec::Renewal(self.chain.clone()),
            n: self.n,
            burn_in: Some(0),
            statistic: StatisticSpec::Tep {
                h: 0,
                grid: self.s_grid.iter().map(|s| vec![*s]).collect(),
                weight: WeightFn::Indicator,
                threshold: ThresholdSpec::Level(u),
                level_rule: LevelRule::Stationary,
            },
            replications: self.replications,
            master_seed: self.master_seed,
            normalization: NormalizationRule::SqrtNfz,
            pilot_multiplier: self.pilot_multiplier,
            center,
            target: None,
        };
        Ok((regime, config))
    }

    fn exact_means(&self, u: f64) -> Result<Vec<f64>> {
        let base = self.chain.stationary_survival(u)?;
        self.s_grid.iter().map(|s| Ok(self.chain.stationary_survival(u * s)? / base)).collect()
    }
}

pub fn counterexample_experiment(config: &CounterexampleConfig, workers: Option<usize>) -> Result<CounterexampleReport> {
    let (regime, experiment) = config.experiment()?;
    let beta = config.chain.law()?.beta;
    let n = config.n as f64;
    let u = n.powf(config.exponent);
    let n_fz = n * config.chain.z_survival(u)?;
    let n_fx = n * config.chain.stationary_survival(u)?;
    let exact_means = config.exact_means(u)?;
    let mc = PreparedExperiment::new(experiment)?.run(workers)?;

    let ok: Vec<&ReplicationRecord> = mc.records.iter().filter(|r| r.ok()).collect();
    let nonzero = ok.iter().filter(|r| r.values.iter().any(|v| *v != 0.0)).count();
    let nonzero_fraction = nonzero as f64 / ok.len() as f64;

    let theory_covariance = match regime {
        Regime::Gaussian => Some(
            config
                .s_grid
                .iter()
                .map(|s| config.s_grid.iter().map(|t| crate::asymptotics::counterexample_cov(beta, *s, *t)).collect())
                .collect::<Result<Vec<Vec<f64>>>>()?,
        ),
        _ => None,
    };

    let stable = match regime {
        Regime::Stable => {
            let a_n = n.powf(1.0 / beta);
            let deviations: Vec<f64> = ok.iter().map(|r| n_fx / a_n * (r.values[0] - exact_means[0])).collect();
            let abs: Vec<f64> = deviations.iter().map(|d| d.abs()).collect();
            let hill_k = (abs.len() / 10).max(2);
            let gamma = crate::estimators::hill(&abs, hill_k)?.value;
            Some(StableDiagnostics {
                a_n,
                hill_k,
                tail_index: 1.0 / gamma,
                jarque_bera: stats::jarque_bera(&deviations),
                deviations,
            })
        }
        _ => None,
    };

    Ok(CounterexampleReport {
        regime,
        beta,
        exponent: config.exponent,
        u,
        n_fz,
        n_fx,
        exact_means,
        nonzero_fraction,
        theory_covariance,
        stable,
        mc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ArSpec, InitialState, InnovationDist};
    use proptest::prelude::*;

    fn pareto_iid(alpha: f64) -> ModelSpec {
        ModelSpec::Ar(ArSpec::new(vec![0.0], InnovationDist::Pareto { alpha, scale: 1.0, signed: false }))
    }

    fn hill_config(n: usize, k: usize, reps: usize) -> ExperimentConfig {
        ExperimentConfig {
            model: pareto_iid(2.0),
            n,
            burn_in: None,
            statistic: StatisticSpec::Estimator { name: "hill".into(), k, h: 0, p: None },
            replications: reps,
            master_seed: 11,
            normalization: NormalizationRule::SqrtK,
            pilot_multiplier: DEFAULT_PILOT_MULTIPLIER,
            center: Some(vec![0.5]),
            target: None,
        }
    }

    #[test]
    fn config_json_roundtrip_and_defaults() {
        let json = r#"{
            "model": {"model": "ar", "coefficients": [0.0], "innovation": {"dist": "pareto", "alpha": 2.0, "scale": 1.0}},
            "n": 1000,
            "statistic": {"kind": "estimator", "name": "hill", "k": 50},
            "replications": 10,
            "master_seed": 3,
            "target": {"quantity": "variance", "value": 0.25, "range": [0.2, 0.3]}
        }"#;
        let c: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(c.pilot_multiplier, 100);
        assert_eq!(c.normalization, NormalizationRule::SqrtK);
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn config_validation_errors() {
        let mut c = hill_config(100, 10, 0);
        assert!(c.validate().is_err());
        c.replications = 5;
        c.normalization = NormalizationRule::SqrtNfz;
        assert!(c.validate().unwrap_err().is_config_error());
        c.normalization = NormalizationRule::SqrtK;
        c.center = Some(vec![0.5, 0.5]);
        assert!(matches!(c.validate(), Err(Error::LengthMismatch { .. })));
        c.center = None;
        c.statistic = StatisticSpec::Estimator { name: "nope".into(), k: 10, h: 0, p: None };
        assert!(matches!(run_experiment(&c), Err(Error::UnknownName { .. })));
    }

    #[test]
    fn report_is_deterministic_across_workers() {
        let c = hill_config(2000, 50, 24);
        let a = run_experiment_with_workers(&c, 1).unwrap();
        let b = run_experiment_with_workers(&c, 8).unwrap();
        let again = run_experiment(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, again);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn single_replication_reproduces() {
        let c = hill_config(2000, 50, 6);
        let prepared = PreparedExperiment::new(c.clone()).unwrap();
        let report = prepared.run(None).unwrap();
        let fresh = PreparedExperiment::new(c).unwrap();
        for r in &report.records {
            assert_eq!(r.seed, derive_seed(11, r.index as u64));
            assert_eq!(&fresh.replication(r.index), r);
        }
    }

    #[test]
    fn failure_budget() {
        // k = n makes every replication fail.
        let c = hill_config(100, 100, 5);
        assert!(matches!(run_experiment(&c), Err(Error::ReplicationBudget { failed: 5, total: 5 })));
        let good = run_experiment(&hill_config(500, 20, 40)).unwrap();
        let mut records = good.records.clone();
        records[0].error = Some("x".into());
        records[0].values.clear();
        records[0].deviations.clear();
        let kept = McReport::from_records(
            good.statistic.clone(),
            good.config.clone(),
            good.centers.clone(),
            good.center_source,
            None,
            None,
            records.clone(),
        )
        .unwrap();
        assert_eq!(kept.failures, 1);
        assert_eq!(kept.components[0].count, 39);
        for r in records.iter_mut().take(3).skip(1) {
            r.error = Some("x".into());
        }
        assert!(McReport::from_records(good.statistic, good.config, good.centers, good.center_source, None, None, records)
            .is_err());
    }

    #[test]
    fn single_point_sweep_equals_run() {
        let c = hill_config(1000, 40, 8);
        let sweep = sweep_k(&c, &[40]).unwrap();
        assert_eq!(sweep[0], run_experiment(&c).unwrap());
    }

    #[test]
    fn pilot_centering_and_fixed_level() {
        let c = ExperimentConfig {
            statistic: StatisticSpec::Tep {
                h: 0,
                grid: vec![vec![1.0]],
                weight: WeightFn::Indicator,
                threshold: ThresholdSpec::OrderStat(20),
                level_rule: LevelRule::PilotLevel,
            },
            pilot_multiplier: 20,
            center: None,
            ..hill_config(1000, 20, 10)
        };
        let report = run_experiment(&c).unwrap();
        assert_eq!(report.center_source, CenterSource::Pilot);
        assert_eq!(report.pilot_seed, Some(derive_seed(11, PILOT_STREAM)));
        assert!((report.centers[0] - 1.0).abs() < 1e-12);
        let level = report.records[0].level;
        assert!(report.records.iter().all(|r| r.level == level));
        // D = n * pilot exceedance rate, identical across replications.
        assert!((report.records[0].sqrt_k_factor.powi(2) - 20.0).abs() < 1e-9);
    }

    #[test]
    fn target_verdicts() {
        let mut c = hill_config(2000, 50, 30);
        c.target = Some(TheoryTarget {
            quantity: TargetQuantity::Variance,
            components: vec![0],
            value: 0.25,
            rel_tol: None,
            range: Some((0.0, 1e9)),
            require_normality: false,
        });
        assert!(run_experiment(&c).unwrap().target_passed());
        c.target.as_mut().unwrap().range = Some((1e8, 1e9));
        let r = run_experiment(&c).unwrap();
        assert!(!r.target_passed());
        assert_eq!(r.target.unwrap().within_tolerance, Some(false));
    }

    #[test]
    fn regimes() {
        assert_eq!(regime(1.5, 0.75).unwrap(), Regime::Degenerate);
        assert_eq!(regime(1.5, 0.4).unwrap(), Regime::Stable);
        assert_eq!(regime(3.0, 0.2).unwrap(), Regime::Gaussian);
        assert!(matches!(regime(2.0, 0.2), Err(Error::OutOfRegime(_))));
        assert!(matches!(regime(2.5, 0.4), Err(Error::OutOfRegime(_))));
    }

    #[test]
    fn counterexample_report_bookkeeping() {
        let cfg = CounterexampleConfig {
            chain: RenewalChainSpec::new(3.0, InitialState::Stationary),
            n: 5000,
            exponent: 0.2,
            s_grid: vec![1.0, 2.0],
            replications: 12,
            master_seed: 5,
            pilot_multiplier: 10,
        };
        let rep = counterexample_experiment(&cfg, Some(2)).unwrap();
        assert_eq!(rep.regime, Regime::Gaussian);
        assert_eq!(rep.mc.center_source, CenterSource::Pilot);
        let cov = rep.theory_covariance.unwrap();
        assert!((cov[0][1] - 0.125).abs() < 0.05 * 0.125 + 1e-2);
        let r = &rep.mc.records[0];
        assert!((r.sqrt_nfz_factor.unwrap().powi(2) - rep.n_fz).abs() < 1e-9);
        assert!((r.sqrt_k_factor.powi(2) - rep.n_fx).abs() < 1e-9);
        assert_eq!(rep.exact_means[0], 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn subset_reaggregation_matches(mask in proptest::collection::vec(any::<bool>(), 20)) {
            prop_assume!(mask.iter().filter(|m| **m).count() >= 2);
            let report = run_experiment(&hill_config(800, 30, 20)).unwrap();
            let sub = report.restricted(|i| mask[i]).unwrap();
            let devs: Vec<f64> = report.records.iter().filter(|r| mask[r.index]).map(|r| r.deviations[0]).collect();
            prop_assert_eq!(sub.components[0], Summary::of(&devs));
            prop_assert_eq!(sub.records.len(), devs.len());
        }
    }
}
