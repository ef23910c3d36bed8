//! Small numerical kernels: adaptive Gauss-Kronrod quadrature, bisection and
//! the Hurwitz zeta function used by the integer Pareto law.

use crate::error::{Error, Result};

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Integrates `f` over `[a, b]` by recursive bisection of Gauss-Kronrod
/// (7, 15) panels until the summed error estimate is below
/// `rel_tol * |integral|` (or a tiny absolute floor).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    // Coarse pass to fix the absolute target.
    let panels = 16;
    let width = (b - a) / panels as f64;
    let mut coarse = 0.0;
    for i in 0..panels {
        coarse += gk15(&f, a + i as f64 * width, a + (i + 1) as f64 * width).0;
    }
    let abs_tol = (rel_tol * coarse.abs()).max(1e-300);
    let mut total = 0.0;
    for i in 0..panels {
        let lo = a + i as f64 * width;
        let hi = lo + width;
        total += refine(&f, lo, hi, abs_tol / panels as f64, 0);
    }
    total
}

fn refine<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (value, err) = gk15(f, a, b);
    if err <= tol || depth >= 40 {
        return value;
    }
    let mid = 0.5 * (a + b);
    refine(f, a, mid, 0.5 * tol, depth + 1) + refine(f, mid, b, 0.5 * tol, depth + 1)
}

/// Bisection for a root of `f` on `[lo, hi]` to absolute width `tol`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let fa = f(a);
    let fb = f(b);
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return Err(Error::RootNotBracketed { lo, hi });
    }
    let neg_at_a = fa < 0.0;
    while b - a > tol {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if (fm < 0.0) == neg_at_a {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

// B_{2k} / (2k)! for k = 1..5.
const BERNOULLI_OVER_FACT: [f64; 5] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30_240.0,
    -1.0 / 1_209_600.0,
    1.0 / 47_900_160.0,
];

/// Hurwitz zeta `sum_{m >= 0} (m + a)^(-s)` for `s > 1`, `a > 0`, via direct
/// summation up to a shift of 20 followed by Euler-Maclaurin.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    debug_assert!(s > 1.0 && a > 0.0);
    let mut sum = 0.0;
    let mut x = a;
    while x < 20.0 {
        sum += x.powf(-s);
        x += 1.0;
    }
    let mut tail = x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    // Rising factorial s (s+1) ... (s+2k-2) times x^(-s-2k+1).
    let mut rising = s;
    let mut xpow = x.powf(-s - 1.0);
    for (k, coef) in BERNOULLI_OVER_FACT.iter().enumerate() {
        tail += coef * rising * xpow;
        let m = 2.0 * k as f64;
        rising *= (s + m + 1.0) * (s + m + 2.0);
        xpow /= x * x;
    }
    sum + tail
}
