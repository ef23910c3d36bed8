//! Moment summaries and the Jarque-Bera normality statistic.

use serde::{Deserialize, Serialize};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    covariance(xs, xs)
}

/// Unbiased sample covariance of two equally long series.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let (mx, my) = (mean(xs), mean(ys));
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (n - 1) as f64
}

fn central_moments(xs: &[f64]) -> (f64, f64, f64) {
    let m = mean(xs);
    let n = xs.len() as f64;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in xs {
        let d = x - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (m2 / n, m3 / n, m4 / n)
}

/// Moment-ratio skewness `m3 / m2^1.5`; 0 for a constant sample.
pub fn skewness(xs: &[f64]) -> f64 {
    let (m2, m3, _) = central_moments(xs);
    if m2 == 0.0 {
        return 0.0;
    }
    m3 / m2.powf(1.5)
}

/// Moment-ratio excess kurtosis `m4 / m2^2 - 3`; 0 for a constant sample.
pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let (m2, _, m4) = central_moments(xs);
    if m2 == 0.0 {
        return 0.0;
    }
    m4 / (m2 * m2) - 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JarqueBera {
    pub statistic: f64,
    /// Upper tail of the chi-square law with two degrees of freedom.
    pub p_value: f64,
}

pub fn jarque_bera(xs: &[f64]) -> JarqueBera {
    let n = xs.len() as f64;
    let s = skewness(xs);
    let k = excess_kurtosis(xs);
    let statistic = n / 6.0 * (s * s + k * k / 4.0);
    JarqueBera { statistic, p_value: (-statistic / 2.0).exp() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub jarque_bera: JarqueBera,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Summary {
        let variance = variance(xs);
        Summary {
            count: xs.len(),
            mean: mean(xs),
            variance,
            std_error: (variance / xs.len() as f64).sqrt(),
            skewness: skewness(xs),
            excess_kurtosis: excess_kurtosis(xs),
            jarque_bera: jarque_bera(xs),
        }
    }
}
