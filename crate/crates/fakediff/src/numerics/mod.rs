//! Shared numerical kernels: normal distribution helpers, adaptive
//! quadrature, bracketed root refinement and the tridiagonal solve.

mod normal;
mod quadrature;
mod roots;
mod tridiag;

pub use normal::{norm_cdf, norm_pdf};
pub use quadrature::{integrate, QuadratureOpts};
pub(crate) use roots::solve_bracketed;
pub(crate) use tridiag::solve_tridiagonal;

/// `n` points spaced evenly on a log scale over `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// `n` points spaced evenly over `[lo, hi]`.
pub fn lin_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(hi > lo && n >= 2);
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}
