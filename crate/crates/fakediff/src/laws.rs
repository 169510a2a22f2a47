//! Marginal-law machinery for the two reference martingale diffusions.
//!
//! Both shipped laws are time-homogeneous martingale diffusions
//! `dX = sigma(X) dB` started at `x0`:
//!
//! * exponential Brownian motion, `sigma(y) = y`, `x0 = 1`, whose time-t
//!   marginal is the unit-mean lognormal
//!   `p_t(x) = (2 pi)^{-1/2} e^{-t/8} t^{-1/2} x^{-3/2} e^{-(ln x)^2 / 2t}`;
//! * Brownian motion, `sigma(y) = 1`, `x0 = 0`, with centred Gaussian
//!   marginals of variance t.
//!
//! A generic [`DiffusionLaw`] interface exposes the analytic data (state
//! interval, volatility, density, CDF, call prices) consumed by the mixture
//! construction, the simulators and the verification battery.

use crate::error::{Error, Result};
use crate::numerics::{integrate, norm_cdf, QuadratureOpts};

/// State-space geometry of a law; decides whether grids and quadrature run
/// on a linear or a logarithmic axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    PositiveHalfLine,
    RealLine,
}

/// Tag for dispatching on the shipped laws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawKind {
    ExponentialBm,
    Brownian,
}

/// Analytic data of a time-homogeneous martingale diffusion.
///
/// Marginals at `t = 0` are the point mass at `x0`; density and CDF require
/// `t > 0` and call prices special-case `t = 0` to the intrinsic value.
pub trait DiffusionLaw {
    fn kind(&self) -> LawKind;
    fn support(&self) -> Support;
    /// Start point; also the mean of every marginal.
    fn x0(&self) -> f64;
    /// Open state interval `(l, r)`.
    fn interval(&self) -> (f64, f64);
    /// Diffusion coefficient, positive on the state interval.
    fn sigma(&self, y: f64) -> f64;
    /// Marginal density `f_t(y)`; zero outside the state interval.
    fn density(&self, t: f64, y: f64) -> f64;
    /// `ln f_t(y)`, `-inf` outside the state interval. Stays finite where
    /// the density itself underflows, which the mixture ratio relies on.
    fn log_density(&self, t: f64, y: f64) -> f64;
    /// Marginal distribution function `F_t(y)`.
    fn cdf(&self, t: f64, y: f64) -> f64;
    /// Undiscounted call price `E[(X_t - k)^+]`.
    fn call(&self, t: f64, k: f64) -> f64;
    /// Interval carrying all but `< 1e-12` of mass *and* of first moment at
    /// time `t`; used to truncate quadrature.
    fn truncated_support(&self, t: f64) -> (f64, f64);
}

/// Exponential Brownian motion `dP/P = dB`, `P_0 = 1` (unit volatility).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExponentialBmLaw;

/// Standard Brownian motion started at 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BrownianLaw;

impl DiffusionLaw for ExponentialBmLaw {
    fn kind(&self) -> LawKind {
        LawKind::ExponentialBm
    }
    fn support(&self) -> Support {
        Support::PositiveHalfLine
    }
    fn x0(&self) -> f64 {
        1.0
    }
    fn interval(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }
    fn sigma(&self, y: f64) -> f64 {
        y
    }
    fn density(&self, t: f64, y: f64) -> f64 {
        assert!(t > 0.0, "density requires t > 0");
        if y <= 0.0 {
            0.0
        } else {
            self.log_density(t, y).exp()
        }
    }
    fn log_density(&self, t: f64, y: f64) -> f64 {
        assert!(t > 0.0, "density requires t > 0");
        if y <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let ln_y = y.ln();
        -0.5 * LN_2PI - t / 8.0 - 0.5 * t.ln() - 1.5 * ln_y - ln_y * ln_y / (2.0 * t)
    }
    fn cdf(&self, t: f64, y: f64) -> f64 {
        assert!(t > 0.0, "cdf requires t > 0");
        if y <= 0.0 {
            0.0
        } else {
            norm_cdf((y.ln() + t / 2.0) / t.sqrt())
        }
    }
    fn call(&self, t: f64, k: f64) -> f64 {
        bs_call(t, k).expect("strike must be positive")
    }
    fn truncated_support(&self, t: f64) -> (f64, f64) {
        // ln X ~ N(-t/2, t); +-8 standard deviations around the mean after
        // tilting by the first moment keeps both mass and mean tails below
        // 1e-12 at every t.
        let s = t.sqrt();
        ((-1.5 * t - 8.0 * s).exp(), (0.5 * t + 8.0 * s).exp())
    }
}

impl DiffusionLaw for BrownianLaw {
    fn kind(&self) -> LawKind {
        LawKind::Brownian
    }
    fn support(&self) -> Support {
        Support::RealLine
    }
    fn x0(&self) -> f64 {
        0.0
    }
    fn interval(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
    fn sigma(&self, _y: f64) -> f64 {
        1.0
    }
    fn density(&self, t: f64, y: f64) -> f64 {
        assert!(t > 0.0, "density requires t > 0");
        self.log_density(t, y).exp()
    }
    fn log_density(&self, t: f64, y: f64) -> f64 {
        assert!(t > 0.0, "density requires t > 0");
        -0.5 * LN_2PI - 0.5 * t.ln() - y * y / (2.0 * t)
    }
    fn cdf(&self, t: f64, y: f64) -> f64 {
        assert!(t > 0.0, "cdf requires t > 0");
        norm_cdf(y / t.sqrt())
    }
    fn call(&self, t: f64, k: f64) -> f64 {
        if t == 0.0 {
            return (-k).max(0.0);
        }
        let s = t.sqrt();
        s * crate::numerics::norm_pdf(k / s) - k * norm_cdf(-k / s)
    }
    fn truncated_support(&self, t: f64) -> (f64, f64) {
        let w = 8.0 * t.sqrt();
        (-w, w)
    }
}

/// One of the two shipped laws, selectable at run time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Law {
    Ebm(ExponentialBmLaw),
    Bm(BrownianLaw),
}

impl Law {
    pub fn ebm() -> Self {
        Law::Ebm(ExponentialBmLaw)
    }
    pub fn bm() -> Self {
        Law::Bm(BrownianLaw)
    }
    pub fn name(&self) -> &'static str {
        match self {
            Law::Ebm(_) => "ebm",
            Law::Bm(_) => "bm",
        }
    }
}

impl std::str::FromStr for Law {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ebm" => Ok(Law::ebm()),
            "bm" => Ok(Law::bm()),
            other => Err(Error::Config(format!(
                "unknown law '{other}', expected 'ebm' or 'bm'"
            ))),
        }
    }
}

macro_rules! delegate {
    ($self:ident, $law:ident => $body:expr) => {
        match $self {
            Law::Ebm($law) => $body,
            Law::Bm($law) => $body,
        }
    };
}

impl DiffusionLaw for Law {
    fn kind(&self) -> LawKind {
        delegate!(self, l => l.kind())
    }
    fn support(&self) -> Support {
        delegate!(self, l => l.support())
    }
    fn x0(&self) -> f64 {
        delegate!(self, l => l.x0())
    }
    fn interval(&self) -> (f64, f64) {
        delegate!(self, l => l.interval())
    }
    fn sigma(&self, y: f64) -> f64 {
        delegate!(self, l => l.sigma(y))
    }
    fn density(&self, t: f64, y: f64) -> f64 {
        delegate!(self, l => l.density(t, y))
    }
    fn log_density(&self, t: f64, y: f64) -> f64 {
        delegate!(self, l => l.log_density(t, y))
    }
    fn cdf(&self, t: f64, y: f64) -> f64 {
        delegate!(self, l => l.cdf(t, y))
    }
    fn call(&self, t: f64, k: f64) -> f64 {
        delegate!(self, l => l.call(t, k))
    }
    fn truncated_support(&self, t: f64) -> (f64, f64) {
        delegate!(self, l => l.truncated_support(t))
    }
}

const LN_2PI: f64 = 1.8378770664093453;

/// Lognormal marginal density of unit-mean exponential Brownian motion.
pub fn lognormal_density(t: f64, x: f64) -> Result<f64> {
    if t <= 0.0 {
        return Err(Error::Domain(format!("lognormal_density requires t > 0, got {t}")));
    }
    if x <= 0.0 {
        return Err(Error::Domain(format!("lognormal_density requires x > 0, got {x}")));
    }
    Ok(ExponentialBmLaw.density(t, x))
}

/// Centred Gaussian density with variance `t`.
pub fn gaussian_density(t: f64, y: f64) -> Result<f64> {
    if t <= 0.0 {
        return Err(Error::Domain(format!("gaussian_density requires t > 0, got {t}")));
    }
    Ok(BrownianLaw.density(t, y))
}

/// Black-Scholes call price for the unit-vol, unit-start exponential
/// Brownian motion: `Phi(d+) - k Phi(d-)` with `d± = -ln(k)/sqrt(t) ± sqrt(t)/2`.
pub fn bs_call(t: f64, k: f64) -> Result<f64> {
    if k <= 0.0 {
        return Err(Error::Domain(format!("bs_call requires k > 0, got {k}")));
    }
    if t < 0.0 {
        return Err(Error::Domain(format!("bs_call requires t >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok((1.0 - k).max(0.0));
    }
    let s = t.sqrt();
    let d_plus = -k.ln() / s + 0.5 * s;
    let d_minus = d_plus - s;
    Ok(norm_cdf(d_plus) - k * norm_cdf(d_minus))
}

/// Quadrature axis used by [`call_from_density`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Linear,
    /// Integrate in `u = ln z`; requires positive bounds.
    Log,
}

impl From<Support> for Axis {
    fn from(s: Support) -> Self {
        match s {
            Support::PositiveHalfLine => Axis::Log,
            Support::RealLine => Axis::Linear,
        }
    }
}

/// `int (z - k)^+ density(z) dz` over `(lo, hi)` by adaptive quadrature at
/// relative tolerance 1e-9. The payoff kink is removed by starting the
/// integral at `max(k, lo)`, where the integrand is smooth.
pub fn call_from_density<F: FnMut(f64) -> f64>(
    density: F,
    lo: f64,
    hi: f64,
    k: f64,
    axis: Axis,
) -> Result<f64> {
    call_from_density_with(density, lo, hi, k, axis, &QuadratureOpts::default())
}

/// [`call_from_density`] with explicit quadrature options; finite-difference
/// consumers drop the absolute floor so tiny tail prices keep full relative
/// accuracy.
pub fn call_from_density_with<F: FnMut(f64) -> f64>(
    mut density: F,
    lo: f64,
    hi: f64,
    k: f64,
    axis: Axis,
    opts: &QuadratureOpts,
) -> Result<f64> {
    let lower = k.max(lo);
    if lower >= hi {
        return Ok(0.0);
    }
    match axis {
        Axis::Linear => integrate(|z| (z - k) * density(z), lower, hi, opts),
        Axis::Log => {
            assert!(lower > 0.0 && hi > 0.0, "log axis requires positive bounds");
            integrate(
                |u| {
                    let z = u.exp();
                    (z - k) * density(z) * z
                },
                lower.ln(),
                hi.ln(),
                opts,
            )
        }
    }
}

/// Call price at `(t, k)` recovered from a law's density by quadrature.
pub fn call_from_law_density<L: DiffusionLaw>(law: &L, t: f64, k: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok((law.x0() - k).max(0.0));
    }
    let (lo, hi) = law.truncated_support(t);
    call_from_density(|z| law.density(t, z), lo, hi, k, law.support().into())
}

/// `n` states spanning `width` standard deviations either side of the start
/// point at time `t`, geometrically for positive laws. Odd `n` puts `x0`
/// itself on the grid.
pub fn audit_states<L: DiffusionLaw>(law: &L, t: f64, width: f64, n: usize) -> Vec<f64> {
    let s = t.sqrt();
    let zs = crate::numerics::lin_spaced(-width, width, n);
    match law.support() {
        Support::PositiveHalfLine => zs.iter().map(|z| law.x0() * (z * s).exp()).collect(),
        Support::RealLine => zs.iter().map(|z| law.x0() + z * s).collect(),
    }
}
