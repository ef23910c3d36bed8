use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Check, InnovationDist, PathSample, Simulator, ValidationReport};
use crate::error::{Error, Result};
use crate::numeric::bisect;
use crate::rng::{derive_seed, rng_from_seed, MOMENT_STREAM};

/// Search bracket for the tail-index root.
pub const TAIL_INDEX_BRACKET: (f64, f64) = (1e-3, 64.0);

const LYAPUNOV_DRAWS: usize = 1_000_000;

/// Coefficients of the threshold ARCH recursion
/// `X_j = sqrt(b10 + b11 X_{j-1}^2) Z_j` below `xi`, `sqrt(b20 + b21 X_{j-1}^2) Z_j` at or above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TarchParams {
    pub b10: f64,
    pub b11: f64,
    pub b20: f64,
    pub b21: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TarchSpec {
    pub b10: f64,
    pub b11: f64,
    pub b20: f64,
    pub b21: f64,
    pub xi: f64,
    #[serde(default)]
    pub innovation: InnovationDist,
    /// Moment order for the `(b11 v b21)^(q/2) E|Z|^q < 1` check. When unset
    /// the most favourable q on a grid over (0, 4] is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment_order: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
}

impl TarchSpec {
    pub fn new(params: TarchParams) -> Self {
        TarchSpec {
            b10: params.b10,
            b11: params.b11,
            b20: params.b20,
            b21: params.b21,
            xi: params.xi,
            innovation: InnovationDist::StandardGaussian,
            moment_order: None,
            burn_in: None,
        }
    }

    pub fn params(&self) -> TarchParams {
        TarchParams { b10: self.b10, b11: self.b11, b20: self.b20, b21: self.b21, xi: self.xi }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovExponent {
    pub value: f64,
    /// Zero when `E log|Z|` is available in closed form.
    pub std_error: f64,
    /// `P(Z < 0)`.
    pub p: f64,
}

/// `gamma = p log sqrt(b11) + (1 - p) log sqrt(b21) + E log|Z|`.
pub fn tarch_lyapunov(params: &TarchParams, innovation: &InnovationDist) -> LyapunovExponent {
    let p = innovation.prob_negative();
    let (mean_log, std_error) = match innovation.mean_log_abs_closed_form() {
        Some(m) => (m, 0.0),
        None => {
            let mut rng = rng_from_seed(derive_seed(0, MOMENT_STREAM));
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..LYAPUNOV_DRAWS {
                let l = innovation.sample(&mut rng).abs().ln();
                sum += l;
                sum_sq += l * l;
            }
            let n = LYAPUNOV_DRAWS as f64;
            let mean = sum / n;
            let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
            (mean, (var / n).sqrt())
        }
    };
    let value = p * 0.5 * params.b11.ln() + (1.0 - p) * 0.5 * params.b21.ln() + mean_log;
    LyapunovExponent { value, std_error, p }
}

fn tail_equation(params: &TarchParams, innovation: &InnovationDist, alpha: f64) -> f64 {
    let neg = innovation.truncated_abs_moment(alpha, true);
    let pos = innovation.truncated_abs_moment(alpha, false);
    let lhs_neg = if neg == 0.0 { 0.0 } else { params.b11.powf(alpha / 2.0) * neg };
    lhs_neg + params.b21.powf(alpha / 2.0) * pos - 1.0
}

/// Solves `b11^(a/2) E[|Z|^a 1{Z<0}] + b21^(a/2) E[|Z|^a 1{Z>=0}] = 1` for
/// the tail index `a` by bisection on [`TAIL_INDEX_BRACKET`].
pub fn tarch_tail_index(params: &TarchParams, innovation: &InnovationDist) -> Result<f64> {
    let (lo, hi) = TAIL_INDEX_BRACKET;
    bisect(|a| tail_equation(params, innovation, a), lo, hi, 1e-8)
}

/// Runs the recursion from `X_0 = 0` over an explicit noise stream.
pub fn tarch_recursion<I>(params: &TarchParams, noise: I, burn_in: usize) -> Vec<f64>
where
    I: IntoIterator<Item = f64>,
{
    let mut x = 0.0_f64;
    let mut out = Vec::new();
    for (step, z) in noise.into_iter().enumerate() {
        let scale = if x < params.xi {
            params.b10 + params.b11 * x * x
        } else {
            params.b20 + params.b21 * x * x
        };
        x = scale.sqrt() * z;
        if step >= burn_in {
            out.push(x);
        }
    }
    out
}

pub fn simulate_tarch(spec: &TarchSpec, n: usize, seed: u64, burn_in: usize) -> Result<PathSample> {
    super::ModelSpec::Tarch(spec.clone()).simulate(n, seed, Some(burn_in))
}

fn moment_condition(b_max: f64, innovation: &InnovationDist, q: f64) -> f64 {
    b_max.powf(q / 2.0) * innovation.abs_moment(q)
}

impl Simulator for TarchSpec {
    fn name(&self) -> &'static str {
        "tarch"
    }

    fn validate(&self) -> Result<ValidationReport> {
        self.innovation.validate()?;
        let params = self.params();
        let coefs = [("b10", params.b10), ("b11", params.b11), ("b20", params.b20), ("b21", params.b21)];
        if coefs.iter().any(|(_, v)| !v.is_finite()) || !params.xi.is_finite() {
            return Err(Error::InvalidSpec("tarch parameters must be finite".into()));
        }
        let mut checks: Vec<Check> = coefs
            .iter()
            .map(|(name, v)| Check { name: format!("{name} > 0"), value: *v, limit: 0.0, passed: *v > 0.0 })
            .collect();
        if checks.iter().any(|c| !c.passed) {
            return Ok(ValidationReport::new("tarch", checks));
        }
        let lyap = tarch_lyapunov(&params, &self.innovation);
        checks.push(Check::less_than("lyapunov_exponent < 0", lyap.value, 0.0));

        let b_max = params.b11.max(params.b21);
        let (q, value) = match self.moment_order {
            Some(q) => (q, moment_condition(b_max, &self.innovation, q)),
            None => (1..=80)
                .map(|i| {
                    let q = i as f64 * 0.05;
                    (q, moment_condition(b_max, &self.innovation, q))
                })
                .fold((f64::NAN, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best }),
        };
        checks.push(Check::less_than("(b11 v b21)^(q/2) E|Z|^q < 1", value, 1.0));

        let mut report = ValidationReport::new("tarch", checks);
        report.info.insert("lyapunov_exponent".into(), lyap.value);
        report.info.insert("lyapunov_std_error".into(), lyap.std_error);
        report.info.insert("p_negative".into(), lyap.p);
        report.info.insert("moment_order".into(), q);
        if lyap.value < 0.0 {
            if let Ok(alpha) = tarch_tail_index(&params, &self.innovation) {
                report.info.insert("tail_index".into(), alpha);
            }
        }
        Ok(report)
    }

    fn default_burn_in(&self) -> usize {
        self.burn_in.unwrap_or(1000)
    }

    fn generate(&self, n: usize, burn_in: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let innovation = &self.innovation;
        let noise = std::iter::repeat_with(|| innovation.sample(rng)).take(n + burn_in);
        tarch_recursion(&self.params(), noise, burn_in)
    }
}
