//! Gamma function and its logarithmic derivatives.
//!
//! `gamma` uses the Lanczos approximation (g = 7, nine terms) for arguments
//! `>= 0.5` and the reflection formula below that. Relative accuracy is
//! around 1e-15 away from the poles.

use std::f64::consts::PI;

use super::FracError;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `sin(pi * x)` with exact argument reduction, so that zeros at integers
/// stay zeros and large arguments keep their precision.
pub(crate) fn sin_pi(x: f64) -> f64 {
    let r = x - 2.0 * (x / 2.0).round();
    if r == 0.0 || r.abs() == 1.0 {
        return 0.0;
    }
    (PI * r).sin()
}

fn is_pole(x: f64) -> bool {
    x <= 0.0 && x == x.floor()
}

// Lanczos sum evaluated at (x - 1); returns (series, w) with w = x - 1 + g + 1/2.
fn lanczos_series(x: f64) -> (f64, f64) {
    let z = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    (acc, z + LANCZOS_G + 0.5)
}

/// The gamma function.
///
/// Fails at zero and the negative integers. Overflows to `inf` past ~171.6,
/// like every `f64` implementation.
pub fn gamma(x: f64) -> Result<f64, FracError> {
    if !x.is_finite() {
        return Err(FracError::NonFinite("gamma argument"));
    }
    if is_pole(x) {
        return Err(FracError::GammaPole(x));
    }
    Ok(gamma_unchecked(x))
}

pub(crate) fn gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        return PI / (sin_pi(x) * gamma_unchecked(1.0 - x));
    }
    let (series, w) = lanczos_series(x);
    // split the power so w^(x - 1/2) does not overflow before the product does
    let half = w.powf(0.5 * (x - 0.5));
    (2.0 * PI).sqrt() * half * (half * (-w).exp()) * series
}

/// Natural logarithm of `|Γ(x)|`.
pub fn ln_gamma(x: f64) -> Result<f64, FracError> {
    if !x.is_finite() {
        return Err(FracError::NonFinite("ln_gamma argument"));
    }
    if is_pole(x) {
        return Err(FracError::GammaPole(x));
    }
    if x < 0.5 {
        let s = sin_pi(x).abs();
        return Ok(PI.ln() - s.ln() - ln_gamma(1.0 - x)?);
    }
    let (series, w) = lanczos_series(x);
    Ok(0.5 * (2.0 * PI).ln() + (x - 0.5) * w.ln() - w + series.ln())
}

/// Digamma function `ψ(x) = Γ'(x)/Γ(x)`.
pub fn digamma(x: f64) -> Result<f64, FracError> {
    if !x.is_finite() {
        return Err(FracError::NonFinite("digamma argument"));
    }
    if is_pole(x) {
        return Err(FracError::GammaPole(x));
    }
    let mut x = x;
    let mut acc = 0.0;
    if x < 0.5 {
        // ψ(1 - x) - ψ(x) = π cot(πx)
        let cot = PI * sin_pi(x + 0.5) / sin_pi(x);
        acc -= cot;
        x = 1.0 - x;
    }
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    Ok(acc + x.ln() - 0.5 / x - tail)
}

/// Trigamma function `ψ'(x)`.
pub fn trigamma(x: f64) -> Result<f64, FracError> {
    if !x.is_finite() {
        return Err(FracError::NonFinite("trigamma argument"));
    }
    if is_pole(x) {
        return Err(FracError::GammaPole(x));
    }
    if x < 0.5 {
        // ψ'(1 - x) + ψ'(x) = π² / sin²(πx)
        let s = sin_pi(x);
        return Ok(PI * PI / (s * s) - trigamma(1.0 - x)?);
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 20.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let tail = inv
        + 0.5 * inv2
        + inv * inv2
            * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0))));
    Ok(acc + tail)
}
