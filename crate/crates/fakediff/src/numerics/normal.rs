//! Standard normal density and distribution function.
//!
//! The CDF is evaluated through the complementary error function,
//! `Phi(x) = erfc(-x / sqrt(2)) / 2`, which keeps full relative accuracy in
//! both tails; the absolute error is far below the 1e-12 the statistical
//! checks in this crate rely on.

use std::f64::consts::PI;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Standard normal density `phi(x)`.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function `Phi(x)`.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}
