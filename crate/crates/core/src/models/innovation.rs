use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{hurwitz_zeta, integrate, std_normal_pdf, EULER_GAMMA};

/// Innovation laws used by the three models.
///
/// `Pareto` has survival `(x / scale)^(-alpha)` on `[scale, inf)`; its signed
/// version puts half the mass on each side. `IntegerPareto` lives on the
/// positive integers with `P(Z > n) = n^(-beta)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum InnovationDist {
    Pareto {
        alpha: f64,
        scale: f64,
        #[serde(default)]
        signed: bool,
    },
    #[default]
    StandardGaussian,
    IntegerPareto {
        beta: f64,
    },
}

impl InnovationDist {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InnovationDist::Pareto { alpha, scale, .. } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::InvalidSpec(format!("pareto alpha must be > 0, got {alpha}")));
                }
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(Error::InvalidSpec(format!("pareto scale must be > 0, got {scale}")));
                }
            }
            InnovationDist::StandardGaussian => {}
            InnovationDist::IntegerPareto { beta } => {
                if !(beta > 1.0 && beta.is_finite()) {
                    return Err(Error::InvalidSpec(format!(
                        "integer pareto beta must be > 1, got {beta}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Index of regular variation of the (right) tail; infinite for the
    /// Gaussian.
    pub fn tail_index(&self) -> f64 {
        match *self {
            InnovationDist::Pareto { alpha, .. } => alpha,
            InnovationDist::StandardGaussian => f64::INFINITY,
            InnovationDist::IntegerPareto { beta } => beta,
        }
    }

    /// `P(Z < 0)`.
    pub fn prob_negative(&self) -> f64 {
        match *self {
            InnovationDist::Pareto { signed: true, .. } | InnovationDist::StandardGaussian => 0.5,
            _ => 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InnovationDist::Pareto { alpha, scale, signed } => {
                let u = 1.0 - rng.random::<f64>();
                let x = scale * u.powf(-1.0 / alpha);
                if signed && rng.random::<bool>() {
                    -x
                } else {
                    x
                }
            }
            InnovationDist::StandardGaussian => rng.sample(rand_distr::StandardNormal),
            InnovationDist::IntegerPareto { beta } => sample_integer_pareto(beta, rng) as f64,
        }
    }

    /// `E[|Z|^a 1{Z < 0}]` (when `negative`) or `E[|Z|^a 1{Z >= 0}]`.
    ///
    /// The Gaussian case is integrated numerically against the density; the
    /// Pareto cases are closed form (infinite when `a >= alpha`).
    pub fn truncated_abs_moment(&self, a: f64, negative: bool) -> f64 {
        match *self {
            InnovationDist::StandardGaussian => gaussian_half_moment(a),
            InnovationDist::Pareto { alpha, scale, signed } => {
                let side = match (signed, negative) {
                    (true, _) => 0.5,
                    (false, true) => 0.0,
                    (false, false) => 1.0,
                };
                if side == 0.0 {
                    0.0
                } else if a >= alpha {
                    f64::INFINITY
                } else {
                    side * alpha * scale.powf(a) / (alpha - a)
                }
            }
            InnovationDist::IntegerPareto { beta } => {
                if negative {
                    0.0
                } else if a >= beta {
                    f64::INFINITY
                } else {
                    // sum_n n^a (S(n-1) - S(n)), n >= 2, S(1) = 1.
                    let mut total = 0.0;
                    let mut n = 2.0_f64;
                    loop {
                        let p = (n - 1.0).powf(-beta) - n.powf(-beta);
                        let term = n.powf(a) * p;
                        total += term;
                        if term < 1e-17 * total || n > 1e7 {
                            break;
                        }
                        n += 1.0;
                    }
                    total
                }
            }
        }
    }

    /// `E|Z|^a`.
    pub fn abs_moment(&self, a: f64) -> f64 {
        self.truncated_abs_moment(a, true) + self.truncated_abs_moment(a, false)
    }

    /// `E[log|Z|]` in closed form when available.
    pub fn mean_log_abs_closed_form(&self) -> Option<f64> {
        match *self {
            InnovationDist::StandardGaussian => Some(-(EULER_GAMMA + std::f64::consts::LN_2) / 2.0),
            _ => None,
        }
    }

    /// Survival `P(Z > n)` of the integer law, `None` for continuous laws.
    pub fn integer_survival(&self, n: u64) -> Option<f64> {
        match *self {
            InnovationDist::IntegerPareto { beta } => Some(if n == 0 { 1.0 } else { (n as f64).powf(-beta) }),
            _ => None,
        }
    }
}

/// `int_0^inf z^a phi(z) dz`, split at 1. The inner piece uses the
/// substitution `z = w^(1/(a+1))` which removes the `z^a` cusp.
fn gaussian_half_moment(a: f64) -> f64 {
    let c = 1.0 / (a + 1.0);
    let inner = c * integrate(|w: f64| std_normal_pdf(w.powf(c)), 0.0, 1.0, 1e-12);
    let upper = 1.0 + a.max(0.0).sqrt() + 40.0;
    let outer = integrate(|z: f64| z.powf(a) * std_normal_pdf(z), 1.0, upper, 1e-12);
    inner + outer
}

/// Inverse-CDF draw from `P(Z > n) = n^(-beta)`: the smallest `n >= 1` with
/// `n^(-beta) < V`.
pub fn sample_integer_pareto<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> u64 {
    let v = 1.0 - rng.random::<f64>();
    integer_pareto_quantile(beta, v)
}

pub fn integer_pareto_quantile(beta: f64, v: f64) -> u64 {
    let survival = |n: u64| if n == 0 { 1.0 } else { (n as f64).powf(-beta) };
    let guess = v.powf(-1.0 / beta).floor();
    let mut n = if guess.is_finite() && guess < 9.0e15 { guess as u64 + 1 } else { 9_000_000_000_000_000 };
    while n > 1 && survival(n - 1) < v {
        n -= 1;
    }
    while survival(n) >= v {
        n += 1;
    }
    n
}

/// Laws on `{1, 2, ...}` usable as renewal lifetimes.
pub trait IntegerLaw {
    /// `P(Z > n)`.
    fn survival(&self, n: u64) -> f64;
    /// `E[Z] = sum_{n >= 0} P(Z > n)`.
    fn mean(&self) -> f64;
    /// `sum_{m >= n} P(Z > m)`.
    fn survival_sum_from(&self, n: u64) -> f64;
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64
    where
        Self: Sized;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegerPareto {
    pub beta: f64,
}

impl IntegerLaw for IntegerPareto {
    fn survival(&self, n: u64) -> f64 {
        if n == 0 {
            1.0
        } else {
            (n as f64).powf(-self.beta)
        }
    }

    fn mean(&self) -> f64 {
        1.0 + hurwitz_zeta(self.beta, 1.0)
    }

    fn survival_sum_from(&self, n: u64) -> f64 {
        if n == 0 {
            self.mean()
        } else {
            hurwitz_zeta(self.beta, n as f64)
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        sample_integer_pareto(self.beta, rng)
    }
}

/// A finitely supported law given by its pmf on `{1, ..., len}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedLaw {
    pmf: Vec<f64>,
    survival: Vec<f64>,
}

impl TabulatedLaw {
    pub fn new(pmf: Vec<f64>) -> Result<Self> {
        let total: f64 = pmf.iter().sum();
        if pmf.is_empty() || pmf.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSpec("pmf must be nonnegative and sum to 1".into()));
        }
        let mut survival = Vec::with_capacity(pmf.len() + 1);
        let mut s = 1.0;
        survival.push(1.0);
        for p in &pmf {
            s -= p;
            survival.push(s.max(0.0));
        }
        Ok(Self { pmf, survival })
    }
}

impl IntegerLaw for TabulatedLaw {
    fn survival(&self, n: u64) -> f64 {
        self.survival.get(n as usize).copied().unwrap_or(0.0)
    }

    fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum()
    }

    fn survival_sum_from(&self, n: u64) -> f64 {
        self.survival.iter().skip(n as usize).sum()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.pmf.iter().enumerate() {
            acc += p;
            if u < acc {
                return i as u64 + 1;
            }
        }
        self.pmf.len() as u64
    }
}
