use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use tailchain::asymptotics::{self, ThetaSource, DEFAULT_MAX_LAG};
use tailchain::estimators::{write_records_csv, EstimatorParams, EstimatorRegistry};
use tailchain::harness::{counterexample_experiment, CounterexampleConfig, ExperimentConfig, PreparedExperiment};
use tailchain::io::{read_path_file, write_json_file, write_path_file};
use tailchain::models::PathSample;
use tailchain::tailcore::ThresholdSpec;
use tailchain::{Error, ModelSpec};

/// Simulation, tail estimation and Monte Carlo checks for heavy-tailed Markov chains.
#[derive(Parser, Debug)]
#[command(name = "tailchain", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON config file for the subcommand.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Replaces the config's seed (`master_seed` for mc and counterexample).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads for replications; results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Dotted-path config override, e.g. `statistic.k=200`; values parse as JSON.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Simulate a path and write it as CSV.
    Simulate,
    /// Run named estimators on a path.
    Estimate,
    /// Empirical extremogram of a path.
    Extremogram,
    /// Limiting Hill variance, covariance series and anticlustering diagnostic.
    Variance,
    /// Replicated Monte Carlo experiment; exit 1 when its target is missed.
    Mc,
    /// Renewal chain tail empirical process experiment.
    Counterexample,
    /// Check a model spec; exit 0 iff accepted.
    Validate,
}

enum Failure {
    Config(String, String),
    Runtime(String, String),
    Tolerance(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e.kind().into(), e.to_string())
        } else {
            Failure::Runtime(e.kind().into(), e.to_string())
        }
    }
}

fn config_err(msg: impl Into<String>) -> Failure {
    Failure::Config("config".into(), msg.into())
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command, &cli.common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, kind, message) = match f {
                Failure::Config(kind, m) => (2, kind, m),
                Failure::Runtime(kind, m) => (3, kind, m),
                Failure::Tolerance(m) => (1, "tolerance".to_string(), m),
            };
            eprintln!("{}", json!({ "error": kind, "message": message, "exit_code": code }));
            ExitCode::from(code)
        }
    }
}

fn dispatch(command: Command, common: &Common) -> CliResult<()> {
    let (raw, base) = load_config(common, command)?;
    fs::create_dir_all(&common.out).map_err(|e| Failure::Runtime("io".into(), e.to_string()))?;
    let out = common.out.as_path();
    match command {
        Command::Simulate => simulate(parse(raw)?, &base, out),
        Command::Estimate => estimate(parse(raw)?, &base, out),
        Command::Extremogram => extremogram(parse(raw)?, &base, out),
        Command::Variance => variance(parse(raw)?, &base, out),
        Command::Mc => mc(parse(raw)?, common.workers, out),
        Command::Counterexample => counterexample(parse(raw)?, common.workers, out),
        Command::Validate => validate(raw, out),
    }
}

fn load_config(common: &Common, command: Command) -> CliResult<(Value, PathBuf)> {
    let path = common.config.as_ref().ok_or_else(|| config_err("--config is required"))?;
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    let mut raw: Value = serde_json::from_str(&text).map_err(|e| Failure::Config("json".into(), e.to_string()))?;
    if let Some(seed) = common.seed {
        let key = match command {
            Command::Mc | Command::Counterexample => "master_seed",
            _ => "seed",
        };
        set_path(&mut raw, key, json!(seed))?;
    }
    for o in &common.overrides {
        let (key, value) = o.split_once('=').ok_or_else(|| config_err(format!("override {o:?} is not key=value")))?;
        let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_owned()));
        set_path(&mut raw, key, value)?;
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((raw, base))
}

/// Sets `a.b.c` in a JSON object, creating intermediate objects; numeric
/// segments index arrays.
fn set_path(root: &mut Value, key: &str, value: Value) -> CliResult<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| config_err(format!("override {key}: {part} is not an index")))?;
                items.get_mut(idx).ok_or_else(|| config_err(format!("override {key}: index {idx} out of range")))?
            }
            Value::Object(map) => map.entry(part.to_string()).or_insert_with(|| if last { Value::Null } else { json!({}) }),
            _ => return Err(config_err(format!("override {key}: {part} is not inside an object"))),
        };
    }
    *cur = value;
    Ok(())
}

fn parse<T: DeserializeOwned>(raw: Value) -> CliResult<T> {
    serde_json::from_value(raw).map_err(|e| Failure::Config("json".into(), e.to_string()))
}

fn write_json<T: serde::Serialize>(out: &Path, name: &str, value: &T) -> CliResult<()> {
    Ok(write_json_file(&out.join(name), value)?)
}

fn create(out: &Path, name: &str) -> CliResult<fs::File> {
    fs::File::create(out.join(name)).map_err(|e| Failure::Runtime("io".into(), e.to_string()))
}

/// Where a subcommand's path comes from: a CSV file or a simulation.
#[derive(Debug, Deserialize)]
struct Source {
    #[serde(default)]
    path: Option<PathBuf>,
    #[serde(default)]
    model: Option<ModelSpec>,
    #[serde(default)]
    n: Option<usize>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    burn_in: Option<usize>,
}

impl Source {
    fn load(&self, base: &Path) -> CliResult<PathSample> {
        match (&self.path, &self.model) {
            (Some(p), None) => Ok(read_path_file(&base.join(p))?),
            (None, Some(model)) => {
                let n = self.n.ok_or_else(|| config_err("n is required with model"))?;
                Ok(model.simulate(n, self.seed, self.burn_in)?)
            }
            _ => Err(config_err("give exactly one of path or model")),
        }
    }
}

#[derive(Debug, Deserialize)]
struct SimulateConfig {
    #[serde(flatten)]
    source: Source,
}

fn simulate(cfg: SimulateConfig, base: &Path, out: &Path) -> CliResult<()> {
    if cfg.source.model.is_none() {
        return Err(config_err("simulate needs a model"));
    }
    let path = cfg.source.load(base)?;
    write_path_file(&out.join("path.csv"), path.values())?;
    write_json(
        out,
        "path.json",
        &json!({ "n": path.len(), "seed": path.seed, "burn_in": path.burn_in, "model": path.model }),
    )?;
    println!("{}", json!({ "written": ["path.csv", "path.json"], "n": path.len() }));
    Ok(())
}

#[derive(Debug, Deserialize)]
struct EstimatorRequest {
    name: String,
    #[serde(flatten)]
    params: EstimatorParams,
}

#[derive(Debug, Deserialize)]
struct EstimateConfig {
    #[serde(flatten)]
    source: Source,
    estimators: Vec<EstimatorRequest>,
}

fn estimate(cfg: EstimateConfig, base: &Path, out: &Path) -> CliResult<()> {
    let path = cfg.source.load(base)?;
    let registry = EstimatorRegistry::default();
    let records = cfg
        .estimators
        .iter()
        .map(|r| registry.get(&r.name)?.estimate(path.values(), &r.params))
        .collect::<tailchain::Result<Vec<_>>>()?;
    write_records_csv(&records, create(out, "estimates.csv")?)?;
    write_json(out, "estimates.json", &records)?;
    println!("{}", json!({ "written": ["estimates.csv", "estimates.json"], "estimates": records.len() }));
    Ok(())
}

fn one() -> f64 {
    1.0
}

fn default_max_lag() -> usize {
    DEFAULT_MAX_LAG
}

#[derive(Debug, Deserialize)]
struct ExtremogramConfig {
    #[serde(flatten)]
    source: Source,
    k: usize,
    #[serde(default = "one")]
    v: f64,
    #[serde(default = "one")]
    w: f64,
    #[serde(default = "default_max_lag")]
    max_lag: usize,
}

fn extremogram(cfg: ExtremogramConfig, base: &Path, out: &Path) -> CliResult<()> {
    let path = cfg.source.load(base)?;
    let e = asymptotics::extremogram(path.values(), cfg.v, cfg.w, cfg.k, cfg.max_lag)?;
    e.write_csv(create(out, "extremogram.csv")?)?;
    write_json(out, "extremogram.json", &e)?;
    println!("{}", json!({ "written": ["extremogram.csv", "extremogram.json"], "threshold": e.u }));
    Ok(())
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
enum ClosedForm {
    Independence,
    Ar1 { phi: f64 },
}

#[derive(Debug, Deserialize)]
struct Anticlustering {
    r: usize,
    m_grid: Vec<usize>,
}

#[derive(Debug, Deserialize)]
struct VarianceConfig {
    #[serde(flatten)]
    source: Source,
    k: usize,
    /// Defaults to the reciprocal Hill estimate at `k`.
    #[serde(default)]
    alpha: Option<f64>,
    #[serde(default = "default_max_lag")]
    max_lag: usize,
    #[serde(default = "one")]
    v: f64,
    #[serde(default = "one")]
    w: f64,
    #[serde(default)]
    closed_form: Option<ClosedForm>,
    #[serde(default)]
    anticlustering: Option<Anticlustering>,
}

fn variance(cfg: VarianceConfig, base: &Path, out: &Path) -> CliResult<()> {
    let path = cfg.source.load(base)?;
    let x = path.values();
    let alpha = match cfg.alpha {
        Some(a) => a,
        None => 1.0 / tailchain::estimators::hill(x, cfg.k)?.value,
    };
    let spectral = asymptotics::spectral_tail_mc(x, ThresholdSpec::OrderStat(cfg.k), cfg.max_lag)?;
    let empirical = asymptotics::hill_limit_variance(ThetaSource::Empirical(&spectral), alpha)?;
    let closed = cfg
        .closed_form
        .map(|c| {
            let source = match c {
                ClosedForm::Independence => ThetaSource::ExtremalIndependence,
                ClosedForm::Ar1 { phi } => ThetaSource::Ar1 { phi },
            };
            asymptotics::hill_limit_variance(source, alpha)
        })
        .transpose()?;
    let covariance = asymptotics::covariance_from_sample(x, cfg.v, cfg.w, cfg.k, cfg.max_lag)?;
    let anticlustering = cfg
        .anticlustering
        .as_ref()
        .map(|a| asymptotics::anticlustering_diagnostic(x, spectral.u, a.r, &a.m_grid))
        .transpose()?;
    let theta_means: Vec<f64> = (0..=cfg.max_lag).map(|j| spectral.capped_power_mean(j, alpha)).collect();
    let mut w = csv::Writer::from_writer(create(out, "spectral.csv")?);
    let csv_err = |e: csv::Error| Failure::from(Error::from(e));
    w.write_record(["lag", "value"]).map_err(csv_err)?;
    for (j, m) in theta_means.iter().enumerate() {
        w.write_record([j.to_string(), m.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Failure::Runtime("io".into(), e.to_string()))?;
    let summary = json!({
        "alpha": alpha,
        "threshold": spectral.u,
        "anchors": spectral.anchors.len(),
        "hill_variance": empirical,
        "hill_variance_closed_form": closed,
        "covariance": { "v": cfg.v, "w": cfg.w, "series": covariance },
        "anticlustering": anticlustering,
    });
    write_json(out, "variance.json", &summary)?;
    println!("{}", json!({ "written": ["variance.json", "spectral.csv"], "hill_variance": empirical.value }));
    Ok(())
}

fn mc(cfg: ExperimentConfig, workers: Option<usize>, out: &Path) -> CliResult<()> {
    let report = PreparedExperiment::new(cfg)?.run(workers)?;
    write_json(out, "report.json", &report)?;
    report.write_records_csv(create(out, "records.csv")?)?;
    let c = &report.components[0];
    println!(
        "{}",
        json!({
            "written": ["report.json", "records.csv"],
            "variance": c.variance,
            "mean": c.mean,
            "jarque_bera_p": c.jarque_bera.p_value,
            "target": report.target,
            "wall_clock_secs": report.wall_clock_secs,
        })
    );
    if !report.target_passed() {
        let t = report.target.as_ref().expect("target present when it fails");
        return Err(Failure::Tolerance(format!(
            "theory target missed: observed {} (relative error {:.4}), normality p {:.4}",
            t.observed, t.relative_error, t.normality_p_value
        )));
    }
    Ok(())
}

fn counterexample(cfg: CounterexampleConfig, workers: Option<usize>, out: &Path) -> CliResult<()> {
    let report = counterexample_experiment(&cfg, workers)?;
    write_json(out, "counterexample.json", &report)?;
    report.mc.write_records_csv(create(out, "records.csv")?)?;
    println!(
        "{}",
        json!({
            "written": ["counterexample.json", "records.csv"],
            "regime": report.regime,
            "n_fz": report.n_fz,
            "nonzero_fraction": report.nonzero_fraction,
            "covariance": report.mc.covariance,
            "theory_covariance": report.theory_covariance,
            "wall_clock_secs": report.mc.wall_clock_secs,
        })
    );
    Ok(())
}

fn validate(raw: Value, out: &Path) -> CliResult<()> {
    // Either a bare model spec or an object holding one under `model`.
    let spec_value = match raw.get("model") {
        Some(inner @ Value::Object(_)) => inner.clone(),
        _ => raw,
    };
    let spec: ModelSpec = parse(spec_value)?;
    let report = spec.validate()?;
    write_json(out, "validation.json", &report)?;
    println!("{}", serde_json::to_string(&report).map_err(|e| Failure::from(Error::from(e)))?);
    if report.accepted {
        Ok(())
    } else {
        Err(Failure::Config(
            "invalid_spec".into(),
            format!("{} spec rejected: {}", spec.name(), report.failures()),
        ))
    }
}
