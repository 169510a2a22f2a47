//! Slowdown clocks: strictly increasing time changes `a(t)` with
//! `a(0) = 0`, `a(t) < t` and `a'(t) < 1`.
//!
//! Two analytic constructions ship. For Brownian marginals the linear clock
//! `a(t) = K^2 t` has density ratio `f_t(y) / f_{a(t)}(y) >= sqrt(a/t) = K`.
//! For lognormal marginals the clock is implicit, `psi(a(t)) = K psi(t)`
//! with `psi(t) = sqrt(t) e^{t/8}`, whose ratio infimum over the state at
//! each time equals `psi(a(t)) / psi(t) = K` with minimiser `y = x0`; its
//! derivative has the closed form `a'(t) = phi(t) / phi(a(t))` with
//! `phi(t) = (t + 4) / (8 t)`, which stays below one.
//!
//! A tabulated kind (piecewise-linear samples) exists so that user-supplied
//! clocks can be validated and rejected; only the analytic kinds carry an
//! exact ratio bound.

use crate::error::{Error, Result};
use crate::laws::DiffusionLaw;
use crate::numerics::{log_spaced, solve_bracketed};

/// Root-refinement tolerance for the implicit clock; tighter than the
/// downstream 1e-12 identity checks so they retain slack.
const CLOCK_REL_TOL: f64 = 1e-15;

/// `psi(t) = sqrt(t) e^{t/8}`, strictly increasing on `[0, inf)`.
pub fn psi(t: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::Domain(format!("psi requires t >= 0, got {t}")));
    }
    Ok(t.sqrt() * (t / 8.0).exp())
}

/// `phi(t) = (t + 4) / (8 t)`, strictly decreasing on `(0, inf)`.
pub fn phi(t: f64) -> Result<f64> {
    if t <= 0.0 {
        return Err(Error::Domain(format!("phi requires t > 0, got {t}")));
    }
    Ok((t + 4.0) / (8.0 * t))
}

#[derive(Debug, Clone)]
enum Kind {
    /// `a(t) = K^2 t`.
    Brownian { k: f64 },
    /// `psi(a(t)) = K psi(t)` solved by bracketed refinement.
    ExponentialBrownian { k: f64 },
    /// Piecewise-linear interpolation of `(t_i, a_i)` samples.
    Tabulated { t: Vec<f64>, a: Vec<f64>, slope: Vec<f64> },
}

/// A slowdown clock. Values are immutable and cheap to share.
#[derive(Debug, Clone)]
pub struct TimeChange {
    kind: Kind,
}

impl TimeChange {
    /// Linear clock `a(t) = K^2 t` for Brownian marginals.
    pub fn brownian(k: f64) -> Result<Self> {
        check_ratio_bound(k)?;
        Ok(Self { kind: Kind::Brownian { k } })
    }

    /// Implicit clock `psi(a) = K psi(t)` for lognormal marginals.
    pub fn exponential_brownian(k: f64) -> Result<Self> {
        check_ratio_bound(k)?;
        Ok(Self { kind: Kind::ExponentialBrownian { k } })
    }

    /// Clock from `(t, a)` samples, linearly interpolated, with the last
    /// segment's slope extended beyond the final sample. The first sample
    /// must be `(0, 0)` and both coordinates must be strictly increasing.
    pub fn tabulated(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidClock("need at least two samples".into()));
        }
        if points[0] != (0.0, 0.0) {
            return Err(Error::InvalidClock(format!(
                "first sample must be (0, 0), got {:?}",
                points[0]
            )));
        }
        let mut t = Vec::with_capacity(points.len());
        let mut a = Vec::with_capacity(points.len());
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 <= w[0].1 {
                return Err(Error::InvalidClock(format!(
                    "samples must be strictly increasing: {:?} -> {:?}",
                    w[0], w[1]
                )));
            }
        }
        for &(ti, ai) in points {
            t.push(ti);
            a.push(ai);
        }
        let slope = t
            .windows(2)
            .zip(a.windows(2))
            .map(|(tw, aw)| (aw[1] - aw[0]) / (tw[1] - tw[0]))
            .collect();
        Ok(Self { kind: Kind::Tabulated { t, a, slope } })
    }

    /// The ratio bound `K` baked into an analytic construction, if any.
    pub fn analytic_ratio_bound(&self) -> Option<f64> {
        match &self.kind {
            Kind::Brownian { k } | Kind::ExponentialBrownian { k } => Some(*k),
            Kind::Tabulated { .. } => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.kind {
            Kind::Brownian { .. } => "brownian",
            Kind::ExponentialBrownian { .. } => "exponential-brownian",
            Kind::Tabulated { .. } => "tabulated",
        }
    }

    /// The warped time `a(t)`.
    pub fn a(&self, t: f64) -> f64 {
        assert!(t >= 0.0, "clock requires t >= 0");
        if t == 0.0 {
            return 0.0;
        }
        match &self.kind {
            Kind::Brownian { k } => k * k * t,
            Kind::ExponentialBrownian { k } => {
                let target = k * psi(t).expect("t >= 0");
                // psi is an increasing bijection of (0, t) onto (0, psi(t)),
                // so the bracket cannot fail for valid K.
                solve_bracketed(
                    |x| x.sqrt() * (x / 8.0).exp() - target,
                    0.0,
                    t,
                    CLOCK_REL_TOL,
                )
                .expect("psi bracket is guaranteed for K in (0,1)")
            }
            Kind::Tabulated { t: ts, a, slope } => {
                let i = segment_index(ts, t);
                a[i] + slope[i] * (t - ts[i])
            }
        }
    }

    /// The clock speed `a'(t)`; at `t = 0` the right limit is returned.
    pub fn a_dot(&self, t: f64) -> f64 {
        assert!(t >= 0.0, "clock requires t >= 0");
        match &self.kind {
            Kind::Brownian { k } => k * k,
            Kind::ExponentialBrownian { k } => {
                if t == 0.0 {
                    // phi(t)/phi(a) -> K^2 as t -> 0.
                    return k * k;
                }
                let a = self.a(t);
                phi(t).unwrap() / phi(a).unwrap()
            }
            Kind::Tabulated { t: ts, slope, .. } => slope[segment_index(ts, t)],
        }
    }
}

fn check_ratio_bound(k: f64) -> Result<()> {
    if !(k > 0.0 && k < 1.0) {
        return Err(Error::InvalidRatioBound(k));
    }
    Ok(())
}

fn segment_index(ts: &[f64], t: f64) -> usize {
    match ts.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
        Ok(i) => i.min(ts.len() - 2),
        Err(0) => 0,
        Err(i) => (i - 1).min(ts.len() - 2),
    }
}

/// Construct the implicit lognormal clock (`make_timechange_ebm`).
pub fn make_timechange_ebm(k: f64) -> Result<TimeChange> {
    TimeChange::exponential_brownian(k)
}

/// Construct the linear Brownian clock (`make_timechange_bm`).
pub fn make_timechange_bm(k: f64) -> Result<TimeChange> {
    TimeChange::brownian(k)
}

/// Numeric infimum of `f_t(y) / f_{a(t)}(y)` over the supplied grids.
///
/// For the shipped analytic pairings this is a consistency check: the
/// infimum is known to equal the construction's `K` and is attained at
/// `y = x0`, so grids should contain the start point.
pub fn ratio_infimum<L: DiffusionLaw>(
    law: &L,
    tc: &TimeChange,
    t_grid: &[f64],
    y_grid: &[f64],
) -> Result<f64> {
    if t_grid.is_empty() || y_grid.is_empty() {
        return Err(Error::DegenerateGrid("empty time or state grid".into()));
    }
    let (lo, hi) = law.interval();
    let mut inf = f64::INFINITY;
    for &t in t_grid {
        if t <= 0.0 {
            return Err(Error::DegenerateGrid(format!("time grid point {t} <= 0")));
        }
        let a = tc.a(t);
        for &y in y_grid {
            if y <= lo || y >= hi {
                return Err(Error::DegenerateGrid(format!(
                    "state grid point {y} outside interval ({lo}, {hi})"
                )));
            }
            let r = (law.log_density(t, y) - law.log_density(a, y)).exp();
            if r < inf {
                inf = r;
            }
        }
    }
    Ok(inf)
}

/// [`ratio_infimum`] on the default audit grid: 64 log-spaced times in
/// `[1e-3, 16]` and 201 states spanning six standard deviations around the
/// start point at each time (geometrically for positive laws).
pub fn ratio_infimum_default<L: DiffusionLaw>(law: &L, tc: &TimeChange) -> Result<f64> {
    let mut inf = f64::INFINITY;
    for &t in &log_spaced(1e-3, 16.0, 64) {
        let ys = crate::laws::audit_states(law, t, 6.0, 201);
        inf = inf.min(ratio_infimum(law, tc, &[t], &ys)?);
    }
    Ok(inf)
}
