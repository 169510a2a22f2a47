//! The mixture construction: residual density, local-volatility
//! coefficient and validation of all preconditions.
//!
//! Given a reference law with marginals `f_t`, a slowdown clock `a` and a
//! mixing weight `c` below the density-ratio bound
//! `K = inf_t inf_y f_t(y) / f_{a(t)}(y)`, the residual family
//!
//! ```text
//! h_t(y) = (f_t(y) - c f_{a(t)}(y)) / (1 - c)
//! ```
//!
//! is a family of unit-mass, mean-`x0` densities increasing in convex
//! order, and the diffusion with local volatility
//!
//! ```text
//! eta(t,y)^2 = sigma(y)^2 (f_t(y) - c a'(t) f_{a(t)}(y)) / (f_t(y) - c f_{a(t)}(y))
//! ```
//!
//! has exactly those marginals. Mixing a slowed copy `X_{a(t)}` (picked
//! with probability `c`) with that diffusion reproduces the reference
//! marginals at every single time while following different dynamics.
//! The ratio `eta^2 / sigma^2` is pinned inside `[1, L^2]` with
//! `L^2 = K / (K - c)`.

use crate::error::{Error, Result};
use crate::laws::{DiffusionLaw, Law};
use crate::numerics::log_spaced;
use crate::timechange::{ratio_infimum_default, TimeChange};

/// Times of the audit grid used by validation and the verification battery:
/// 64 log-spaced points in `[1e-3, 16]`.
pub fn audit_times() -> Vec<f64> {
    log_spaced(1e-3, 16.0, 64)
}

/// Number of audit states per time; odd so the start point is on the grid.
pub const AUDIT_STATES: usize = 201;

/// Width of the audit state band in standard deviations.
pub const AUDIT_WIDTH_SD: f64 = 6.0;

/// A validated fake-diffusion construction.
#[derive(Debug, Clone)]
pub struct FakeSpec {
    law: Law,
    tc: TimeChange,
    c: f64,
    ratio_bound: f64,
    l_squared: f64,
}

impl FakeSpec {
    pub fn law(&self) -> &Law {
        &self.law
    }
    pub fn clock(&self) -> &TimeChange {
        &self.tc
    }
    /// Mixing weight, strictly inside `(0, K)`.
    pub fn c(&self) -> f64 {
        self.c
    }
    /// The ratio bound `K` backing the validation.
    pub fn ratio_bound(&self) -> f64 {
        self.ratio_bound
    }
    /// `L^2 = K / (K - c) > 1`.
    pub fn l_squared(&self) -> f64 {
        self.l_squared
    }
}

/// Validate `(law, clock, c)` into a [`FakeSpec`].
///
/// Checks, in order: the clock is a strictly increasing slowdown with
/// `a(t) < t` on the audit grid, its speed stays inside `(0, 1)`, the
/// ratio bound `K` exceeds `c`, and `0 < c < K < 1`. For the canonical
/// analytic pairings `K` is taken from the clock's construction; for
/// tabulated clocks (and the linear clock under the lognormal law, whose
/// ratio infimum degenerates to zero) it is estimated on the audit grid.
pub fn validate_spec(law: Law, tc: TimeChange, c: f64) -> Result<FakeSpec> {
    if !c.is_finite() || !(c > 0.0 && c < 1.0) {
        return Err(Error::MixingWeightOutOfRange { c, k: f64::NAN });
    }

    let times = audit_times();
    let mut prev_a = 0.0;
    let mut prev_t = 0.0;
    for &t in &times {
        let a = tc.a(t);
        if !(a > prev_a) || a >= t {
            return Err(Error::InvalidClock(format!(
                "a({t}) = {a} violates strict increase below the identity \
                 (previous a({prev_t}) = {prev_a})"
            )));
        }
        let a_dot = tc.a_dot(t);
        if a_dot >= 1.0 {
            return Err(Error::ClockDerivativeTooLarge { t, a_dot });
        }
        if a_dot <= 0.0 {
            return Err(Error::InvalidClock(format!("a'({t}) = {a_dot} <= 0")));
        }
        prev_a = a;
        prev_t = t;
    }

    let analytic = match (law.kind(), tc.kind_name()) {
        (crate::laws::LawKind::ExponentialBm, "exponential-brownian") => tc.analytic_ratio_bound(),
        (crate::laws::LawKind::Brownian, "brownian") => tc.analytic_ratio_bound(),
        // The implicit clock also bounds the Gaussian ratio: at y = 0 it is
        // sqrt(a/t) = K e^{(t-a)/8} >= K, with infimum K as t -> 0.
        (crate::laws::LawKind::Brownian, "exponential-brownian") => tc.analytic_ratio_bound(),
        _ => None,
    };
    let ratio_bound = match analytic {
        Some(k) => {
            if c >= k {
                return Err(Error::MixingWeightOutOfRange { c, k });
            }
            k
        }
        None => {
            let estimate = ratio_infimum_default(&law, &tc)?;
            if estimate <= c {
                return Err(Error::RatioBoundBelowWeight { k_est: estimate, c });
            }
            estimate
        }
    };

    Ok(FakeSpec {
        law,
        tc,
        c,
        ratio_bound,
        l_squared: ratio_bound / (ratio_bound - c),
    })
}

/// Residual density `h_t(y) = (f_t(y) - c f_{a(t)}(y)) / (1 - c)`.
///
/// Computed from the densities directly so that the mixture identity
/// `c f_{a(t)} + (1 - c) h_t = f_t` holds to a few ulp.
pub fn residual_density(spec: &FakeSpec, t: f64, y: f64) -> Result<f64> {
    Ok(spec.residual_density_at(t)?(y))
}

impl FakeSpec {
    /// The residual density at a fixed time as a plain function of the
    /// state. Resolving the implicit clock once here is what makes tight
    /// quadrature over thousands of density evaluations affordable.
    pub fn residual_density_at(&self, t: f64) -> Result<impl Fn(f64) -> f64 + '_> {
        if t <= 0.0 {
            return Err(Error::Domain(format!("residual density requires t > 0, got {t}")));
        }
        let a = self.tc.a(t);
        let c = self.c;
        let (lo, hi) = self.law.interval();
        Ok(move |y: f64| {
            if y <= lo || y >= hi {
                return 0.0;
            }
            let f_t = self.law.density(t, y);
            let f_a = self.law.density(a, y);
            let h = (f_t - c * f_a) / (1.0 - c);
            debug_assert!(h >= -1e-300, "negative residual density signals c >= K");
            h
        })
    }
}

/// Local volatility `eta(t, y)` of the residual diffusion.
///
/// Evaluated through the density ratio `r = f_{a(t)}(y) / f_t(y)`, which is
/// formed in log space so deep tails where both densities underflow still
/// produce the correct limit `eta -> sigma`.
pub fn local_vol_eta(spec: &FakeSpec, t: f64, y: f64) -> Result<f64> {
    if t <= 0.0 {
        return Err(Error::Domain(format!("local volatility requires t > 0, got {t}")));
    }
    let (lo, hi) = spec.law.interval();
    if y <= lo || y >= hi {
        return Err(Error::Domain(format!("state {y} outside interval ({lo}, {hi})")));
    }
    let a = spec.tc.a(t);
    let a_dot = spec.tc.a_dot(t);
    let ratio = eta_sq_over_sigma_sq(&spec.law, spec.c, t, a, a_dot, y);
    Ok(spec.law.sigma(y) * ratio.sqrt())
}

/// `eta(t,y)^2 / sigma(y)^2 = (1 - c a' r) / (1 - c r)` with
/// `r = f_{a}(y) / f_t(y)`; shared with the simulation kernels, which have
/// the warped time and speed precomputed.
///
/// Evaluated as `1 + c r (1 - a') / (1 - c r)`, which is exact where the
/// textbook quotient would round to 1 for tiny `r`.
pub(crate) fn eta_sq_over_sigma_sq<L: DiffusionLaw>(
    law: &L,
    c: f64,
    t: f64,
    a: f64,
    a_dot: f64,
    y: f64,
) -> f64 {
    let r = (law.log_density(a, y) - law.log_density(t, y)).exp();
    1.0 + c * r * (1.0 - a_dot) / (1.0 - c * r)
}

/// The residual marginal family of a validated spec, with the analytic
/// call prices and distribution function implied by the mixture identity.
#[derive(Debug, Clone, Copy)]
pub struct ResidualLaw<'a> {
    spec: &'a FakeSpec,
}

impl<'a> ResidualLaw<'a> {
    pub fn new(spec: &'a FakeSpec) -> Self {
        Self { spec }
    }

    pub fn density(&self, t: f64, y: f64) -> Result<f64> {
        residual_density(self.spec, t, y)
    }

    /// `(F_t - c F_{a(t)}) / (1 - c)`.
    pub fn cdf(&self, t: f64, y: f64) -> f64 {
        let law = &self.spec.law;
        (law.cdf(t, y) - self.spec.c * law.cdf(self.spec.tc.a(t), y)) / (1.0 - self.spec.c)
    }

    /// Call price from the reference law's closed forms,
    /// `(C_f(t, k) - c C_f(a(t), k)) / (1 - c)`.
    pub fn call_closed_form(&self, t: f64, k: f64) -> f64 {
        let law = &self.spec.law;
        (law.call(t, k) - self.spec.c * law.call(self.spec.tc.a(t), k)) / (1.0 - self.spec.c)
    }

    /// Call price by adaptive quadrature of the residual density; the
    /// route independent of the closed forms, used for cross-checks.
    pub fn call_quadrature(&self, t: f64, k: f64) -> Result<f64> {
        self.call_quadrature_with(t, k, &crate::numerics::QuadratureOpts::default())
    }

    /// [`Self::call_quadrature`] with explicit quadrature options.
    pub fn call_quadrature_with(
        &self,
        t: f64,
        k: f64,
        opts: &crate::numerics::QuadratureOpts,
    ) -> Result<f64> {
        let law = &self.spec.law;
        if t == 0.0 {
            return Ok((law.x0() - k).max(0.0));
        }
        let (lo, hi) = law.truncated_support(t);
        let density = self.spec.residual_density_at(t)?;
        crate::laws::call_from_density_with(density, lo, hi, k, law.support().into(), opts)
    }

    /// Put price `int (k - z)^+ h_t(z) dz` by quadrature. For strikes below
    /// the mean this is the numerically small side of put-call parity:
    /// time derivatives of the call and the put coincide, without the
    /// cancellation of differencing values near `x0 - k`.
    pub fn put_quadrature_with(
        &self,
        t: f64,
        k: f64,
        opts: &crate::numerics::QuadratureOpts,
    ) -> Result<f64> {
        let law = &self.spec.law;
        if t == 0.0 {
            return Ok((k - law.x0()).max(0.0));
        }
        let (lo, hi) = law.truncated_support(t);
        let upper = k.min(hi);
        if upper <= lo {
            return Ok(0.0);
        }
        let density = self.spec.residual_density_at(t)?;
        match law.support() {
            crate::laws::Support::PositiveHalfLine => crate::numerics::integrate(
                |u| {
                    let z = u.exp();
                    (k - z) * density(z) * z
                },
                lo.ln(),
                upper.ln(),
                opts,
            ),
            crate::laws::Support::RealLine => {
                crate::numerics::integrate(|z| (k - z) * density(z), lo, upper, opts)
            }
        }
    }
}

/// Time derivative of the residual call price implied by the densities:
/// `(sigma(y)^2 / 2) (f_t(y) - c a'(t) f_{a(t)}(y)) / (1 - c)`.
///
/// Positive everywhere; this is the convex-order certificate.
pub fn convex_order_integrand(spec: &FakeSpec, t: f64, y: f64) -> f64 {
    let law = &spec.law;
    let s = law.sigma(y);
    let f_t = law.density(t, y);
    let f_a = law.density(spec.tc.a(t), y);
    0.5 * s * s * (f_t - spec.c * spec.tc.a_dot(t) * f_a) / (1.0 - spec.c)
}
