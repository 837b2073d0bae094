//! Special functions used by the closed-form gate expressions.
//!
//! Everything here is evaluated in-house: a Lanczos log-Gamma and direct
//! Gauss hypergeometric series with explicit termination criteria.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Relative size of the running term at which a series is considered converged.
pub const SERIES_REL_TOL: f64 = 1e-14;

/// Hard cap on the number of series terms.
pub const SERIES_MAX_TERMS: usize = 1_000_000;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the Gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma is only defined here for positive arguments");
    if x < 0.5 {
        // reflection: Gamma(x) Gamma(1 - x) = pi / sin(pi x)
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

pub fn gamma(x: f64) -> f64 {
    ln_gamma(x).exp()
}

pub fn ln_factorial(n: u32) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// Binomial coefficient `C(n, k)` through log-Gamma, rounded to the nearest
/// integer (exact for every value representable in an `f64` mantissa).
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    (ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k))
        .exp()
        .round()
}

/// Direct summation of the Gauss series `2F1(a, b; c; z)`.
pub(crate) fn hyp2f1_direct(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..SERIES_MAX_TERMS {
        let k = k as f64;
        term *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * z;
        sum += term;
        if term.abs() < SERIES_REL_TOL * sum.abs() || term == 0.0 {
            return Ok(sum);
        }
    }
    Err(Error::SeriesNonConvergence(SERIES_MAX_TERMS))
}

/// `2F1(1/2, b; 3/2; z)` by direct series summation for `z` in `[0, 1]`.
///
/// At `z = 1` the series only converges for `b < 1`, and then only
/// algebraically, so that point is evaluated by Gauss's summation theorem.
/// Hitting the term cap is reported as [`Error::SeriesNonConvergence`].
pub fn hyp2f1_series(b: f64, z: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::OutOfRange(format!("z = {z} outside [0, 1]")));
    }
    if z == 1.0 && b >= 1.0 {
        return Err(Error::OutOfRange(format!(
            "series diverges at z = 1 for b = {b}"
        )));
    }
    if z == 1.0 {
        // Gamma(3/2) Gamma(1 - b) / Gamma(3/2 - b); 1 - b > 0 and 3/2 - b > 0 here
        return Ok(0.5 * PI.sqrt() * (ln_gamma(1.0 - b) - ln_gamma(1.5 - b)).exp());
    }
    hyp2f1_direct(0.5, b, 1.5, z)
}

/// `2F1(1/2, 1/2 - N; 3/2; z)` for integer `N >= 1`, switching to the
/// `z -> 1 - z` connection formula above `z = 1/2` so that convergence stays
/// geometric near `z = 1`.
pub(crate) fn cardioid_hyp2f1(n: u32, z: f64) -> Result<f64> {
    let b = 0.5 - n as f64;
    if z <= 0.5 {
        return hyp2f1_series(b, z);
    }
    let nf = n as f64;
    let gauss = 0.5 * PI.sqrt() * (ln_gamma(nf + 0.5) - ln_factorial(n)).exp();
    let w = 1.0 - z;
    let tail = if w == 0.0 {
        0.0
    } else {
        w.powf(nf + 0.5) / (2.0 * nf + 1.0) * hyp2f1_direct(1.0, nf + 1.0, nf + 1.5, w)?
    };
    Ok(gauss / z.sqrt() - tail)
}
