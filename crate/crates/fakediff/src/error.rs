//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by constructors, samplers and verification routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Mixing weight `c` must lie strictly inside (0, K).
    #[error("mixing weight c = {c} must satisfy 0 < c < K = {k}")]
    MixingWeightOutOfRange { c: f64, k: f64 },

    /// Clock ratio bound must lie strictly inside (0, 1).
    #[error("ratio bound K = {0} must lie in (0, 1)")]
    InvalidRatioBound(f64),

    /// The clock derivative must stay strictly below one.
    #[error("clock derivative constraint violated: a'({t}) = {a_dot} >= 1")]
    ClockDerivativeTooLarge { t: f64, a_dot: f64 },

    /// Estimated density-ratio infimum does not leave room for the mixture.
    #[error("density-ratio infimum {k_est} does not exceed mixing weight {c}")]
    RatioBoundBelowWeight { k_est: f64, c: f64 },

    /// Clock values must be strictly increasing with a(t) < t.
    #[error("clock is not a strictly increasing slowdown: {0}")]
    InvalidClock(String),

    /// Adaptive quadrature ran out of refinement budget.
    #[error("quadrature did not converge: {0}")]
    QuadratureNonconvergence(String),

    /// Bracketed root refinement failed; indicates a defect, not bad input.
    #[error("root bracketing failed: {0}")]
    RootBracket(String),

    /// Law has no exact sampler or is otherwise unsupported by an operation.
    #[error("unsupported law: {0}")]
    UnsupportedLaw(String),

    /// A simulated path left the numerically sane region.
    #[error("path {path_id} exploded at step {step}: |ln value| > {bound}")]
    PathExplosion { path_id: usize, step: usize, bound: f64 },

    /// Statistical test invoked on an empty sample.
    #[error("empty sample")]
    EmptySample,

    /// Grid unusable for the requested scan.
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    /// Run configuration rejected before any work started.
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
