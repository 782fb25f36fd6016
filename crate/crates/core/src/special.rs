use libm::{erf, erfc};
use std::f64::consts::{PI, SQRT_2};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Standard normal CDF, accurate in both tails.
pub(crate) fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal survival function `1 - norm_cdf(z)`.
pub(crate) fn norm_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

pub(crate) fn erf_fn(x: f64) -> f64 {
    erf(x)
}

pub(crate) fn normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d / variance).exp() / (2.0 * PI * variance).sqrt()
}

pub(crate) fn normal_ln_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + variance.ln()) - 0.5 * d * d / variance
}

/// Integral of `|f|` over `[0, len]` for `f` linear with end values `u`, `v`.
pub(crate) fn abs_linear_integral(u: f64, v: f64, len: f64) -> f64 {
    if u * v >= 0.0 {
        0.5 * (u.abs() + v.abs()) * len
    } else {
        0.5 * (u * u + v * v) / (u.abs() + v.abs()) * len
    }
}
