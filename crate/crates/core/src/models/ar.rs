use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Check, InnovationDist, PathSample, Simulator, ValidationReport};
use crate::error::{Error, Result};

/// Causal AR(p) model `X_j = phi_1 X_{j-1} + ... + phi_p X_{j-p} + eps_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArSpec {
    pub coefficients: Vec<f64>,
    pub innovation: InnovationDist,
    /// Tail index used by the `sum |phi_i|^q < 1` check; defaults to the
    /// innovation's own tail index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
}

impl ArSpec {
    pub fn new(coefficients: Vec<f64>, innovation: InnovationDist) -> Self {
        ArSpec { coefficients, innovation, alpha: None, burn_in: None }
    }

    pub fn tail_index(&self) -> f64 {
        self.alpha.unwrap_or_else(|| self.innovation.tail_index())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArValidation {
    pub spectral_radius: f64,
    pub q: f64,
    pub q_sum: f64,
    /// Whether the `sum |phi_i|^q < 1` condition applies (`alpha <= 2`).
    pub q_condition_applies: bool,
    pub accepted: bool,
}

/// Spectral radius of the companion matrix (first row `phi`, ones on the
/// subdiagonal) and the `q = min(1, alpha)` coefficient sum.
pub fn validate_ar(phi: &[f64], alpha: f64) -> Result<ArValidation> {
    if phi.is_empty() {
        return Err(Error::InvalidSpec("AR coefficient sequence is empty".into()));
    }
    if phi.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidSpec("AR coefficients must be finite".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidSpec(format!("tail index must be > 0, got {alpha}")));
    }
    let spectral_radius = companion_spectral_radius(phi);
    let q = alpha.min(1.0);
    let q_sum: f64 = phi.iter().map(|c| c.abs().powf(q)).sum();
    let q_condition_applies = alpha <= 2.0;
    let accepted = spectral_radius < 1.0 && (!q_condition_applies || q_sum < 1.0);
    Ok(ArValidation { spectral_radius, q, q_sum, q_condition_applies, accepted })
}

fn companion_spectral_radius(phi: &[f64]) -> f64 {
    let p = phi.len();
    if p == 1 {
        return phi[0].abs();
    }
    let mut m = DMatrix::<f64>::zeros(p, p);
    for (j, c) in phi.iter().enumerate() {
        m[(0, j)] = *c;
    }
    for i in 1..p {
        m[(i, i - 1)] = 1.0;
    }
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Runs the AR recursion from a zero state over an explicit innovation
/// stream, discarding the first `burn_in` outputs.
pub fn ar_recursion<I>(phi: &[f64], innovations: I, burn_in: usize) -> Vec<f64>
where
    I: IntoIterator<Item = f64>,
{
    let p = phi.len();
    // history[0] is X_{j-1}.
    let mut history = vec![0.0; p];
    let mut out = Vec::new();
    for (step, eps) in innovations.into_iter().enumerate() {
        let x = phi.iter().zip(&history).map(|(c, h)| c * h).sum::<f64>() + eps;
        history.rotate_right(1);
        if p > 0 {
            history[0] = x;
        }
        if step >= burn_in {
            out.push(x);
        }
    }
    out
}

/// Validates and simulates an AR path.
pub fn simulate_ar(spec: &ArSpec, n: usize, seed: u64, burn_in: usize) -> Result<PathSample> {
    super::ModelSpec::Ar(spec.clone()).simulate(n, seed, Some(burn_in))
}

impl Simulator for ArSpec {
    fn name(&self) -> &'static str {
        "ar"
    }

    fn validate(&self) -> Result<ValidationReport> {
        self.innovation.validate()?;
        let v = validate_ar(&self.coefficients, self.tail_index())?;
        let mut checks = vec![Check::less_than("spectral_radius < 1", v.spectral_radius, 1.0)];
        if v.q_condition_applies {
            checks.push(Check::less_than("sum |phi_i|^q < 1 (q = min(1, alpha))", v.q_sum, 1.0));
        }
        Ok(ValidationReport::new("ar", checks))
    }

    fn default_burn_in(&self) -> usize {
        self.burn_in.unwrap_or(10 * self.coefficients.len())
    }

    fn generate(&self, n: usize, burn_in: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let innovation = &self.innovation;
        let stream = std::iter::repeat_with(|| innovation.sample(rng)).take(n + burn_in);
        ar_recursion(&self.coefficients, stream, burn_in)
    }
}
