//! Independent verification: a finite-difference solve of the forward
//! (Dupire) pricing equation cross-checking the residual diffusion's law,
//! convex-order diagnostics, and the statistical test battery.
//!
//! The centrepiece is a dual route to the residual marginals. Call prices
//! `C_h(t, k) = int (z - k)^+ h_t(z) dz` are computed once by adaptive
//! quadrature of the residual density and once by solving
//!
//! ```text
//! dC/dt = eta(t,y)^2 C''(t,y) / 2,    C(0,y) = (x0 - y)^+
//! ```
//!
//! with a theta = 1/2 scheme started by two fully implicit half-steps
//! (which damp the payoff kink and restore second-order convergence).
//! Agreement of the two routes is numerical evidence that the diffusion
//! with coefficient `eta` reproduces the residual marginals.

use crate::error::{Error, Result};
use crate::laws::{audit_states, DiffusionLaw, Support};
use crate::mixture::{
    audit_times, convex_order_integrand, eta_sq_over_sigma_sq, residual_density, validate_spec,
    FakeSpec, ResidualLaw, AUDIT_STATES, AUDIT_WIDTH_SD,
};
use crate::numerics::solve_tridiagonal;
use crate::simulate::{scan, Component, EnsembleKind, ScanCfg};
use crate::timechange::psi;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov tests
// ---------------------------------------------------------------------------

/// Asymptotic Kolmogorov survival function `Q(lambda) = 2 sum (-1)^{k-1} e^{-2 k^2 lambda^2}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        if term < 1e-300 {
            break;
        }
        sum += if k % 2 == 1 { term } else { -term };
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic one-sample KS critical value at level `alpha`:
/// `sqrt(-ln(alpha/2) / (2 n))`.
pub fn ks_critical(alpha: f64, n: usize) -> f64 {
    (-(alpha / 2.0).ln() / (2.0 * n as f64)).sqrt()
}

/// One-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut xs = samples.to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok((d, kolmogorov_q(n.sqrt() * d)))
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks2_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    ys.sort_unstable_by(f64::total_cmp);
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = xs[i].min(ys[j]);
        while i < n && xs[i] <= v {
            i += 1;
        }
        while j < m && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    Ok(d)
}

/// Two-sample KS with its asymptotic p-value.
pub fn ks2_test(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    let d = ks2_statistic(a, b)?;
    let n_eff = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    Ok((d, kolmogorov_q(n_eff.sqrt() * d)))
}

/// Two-sample asymptotic critical value at level `alpha`.
pub fn ks2_critical(alpha: f64, n: usize, m: usize) -> f64 {
    ((-(alpha / 2.0).ln()) / 2.0).sqrt() * (((n + m) as f64) / (n as f64 * m as f64)).sqrt()
}

// ---------------------------------------------------------------------------
// Dupire PDE solve
// ---------------------------------------------------------------------------

/// Grid resolution for [`solve_dupire`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DupireGrids {
    /// Space nodes; odd counts put the start point on the grid.
    pub n_space: usize,
    /// Time steps to the horizon.
    pub n_time: usize,
    /// Keep every k-th time level (plus the initial and final ones).
    pub store_every: usize,
}

impl Default for DupireGrids {
    fn default() -> Self {
        Self { n_space: 401, n_time: 400, store_every: 1 }
    }
}

/// A call-price surface `C(t_i, y_j)` produced by the PDE solver.
#[derive(Debug, Clone)]
pub struct CallSurface {
    t: Vec<f64>,
    y: Vec<f64>,
    /// Row-major: `values[level * y.len() + j]`.
    values: Vec<f64>,
}

impl CallSurface {
    pub fn times(&self) -> &[f64] {
        &self.t
    }
    pub fn states(&self) -> &[f64] {
        &self.y
    }
    pub fn level(&self, i: usize) -> &[f64] {
        let w = self.y.len();
        &self.values[i * w..(i + 1) * w]
    }
    pub fn terminal(&self) -> &[f64] {
        self.level(self.t.len() - 1)
    }

    /// Worst violations of the structural surface invariants: the exact
    /// initial condition, convexity in `y`, monotonicity in `t` and the
    /// price bounds (with the real-line band `(x0-y)^+ + J`).
    pub fn invariant_violations(&self, spec: &FakeSpec) -> SurfaceViolations {
        let x0 = spec.law().x0();
        let horizon = *self.t.last().unwrap();
        let band = match spec.law().support() {
            Support::PositiveHalfLine => None,
            Support::RealLine => {
                Some(spec.law().call(spec.l_squared() * horizon, x0) / (1.0 - spec.c()))
            }
        };
        let mut v = SurfaceViolations::default();
        let w = self.y.len();
        for (j, &y) in self.y.iter().enumerate() {
            let intrinsic = (x0 - y).max(0.0);
            v.initial = v.initial.max((self.values[j] - intrinsic).abs());
            for i in 0..self.t.len() {
                let c = self.values[i * w + j];
                v.lower_bound = v.lower_bound.max(intrinsic - c);
                match band {
                    None => v.upper_bound = v.upper_bound.max(c - x0),
                    Some(jv) => v.upper_bound = v.upper_bound.max(c - intrinsic - jv),
                }
                if i + 1 < self.t.len() {
                    v.time_monotone = v.time_monotone.max(c - self.values[(i + 1) * w + j]);
                }
                // Convexity in the state itself (grids may be geometric):
                // slopes in y must be non-decreasing.
                if j >= 1 && j + 1 < w {
                    let s_left = (c - self.values[i * w + j - 1]) / (y - self.y[j - 1]);
                    let s_right = (self.values[i * w + j + 1] - c) / (self.y[j + 1] - y);
                    v.convexity = v.convexity.max(s_left - s_right);
                }
            }
        }
        v
    }
}

/// Largest violation per surface invariant; all should be at rounding level.
#[derive(Debug, Clone, Copy, Default)]
pub struct SurfaceViolations {
    pub initial: f64,
    pub convexity: f64,
    pub time_monotone: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

impl SurfaceViolations {
    pub fn max(&self) -> f64 {
        self.initial
            .max(self.convexity)
            .max(self.time_monotone)
            .max(self.lower_bound)
            .max(self.upper_bound)
    }
}

/// Solve the forward pricing equation for the residual diffusion up to
/// `horizon` and return the call surface.
///
/// Positive laws are solved on a uniform grid in `ln y` spanning
/// `x0 e^{±6 sqrt(L^2 T)}`; real-line laws on a uniform grid in `y` over
/// `x0 ± 6 sqrt(L^2 T)`. Boundaries hold the intrinsic value at the bottom
/// and zero at the top; the initial kink node carries its cell average so
/// the Rannacher start converges at second order.
pub fn solve_dupire(spec: &FakeSpec, horizon: f64, grids: &DupireGrids) -> Result<CallSurface> {
    if !(horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    if grids.n_space < 5 || grids.n_space % 2 == 0 || grids.n_time < 2 || grids.store_every == 0 {
        return Err(Error::Config(format!(
            "need an odd space count >= 5 and >= 2 time steps, got {grids:?}"
        )));
    }

    let law = spec.law();
    let x0 = law.x0();
    let positive = law.support() == Support::PositiveHalfLine;
    let half_width = 6.0 * (spec.l_squared() * horizon).sqrt();
    let ny = grids.n_space;
    let mid = (ny - 1) / 2;

    // Solve coordinate u: ln y on the half line, y itself on the real line.
    let du = 2.0 * half_width / (ny - 1) as f64;
    let u0 = if positive { x0.ln() } else { x0 };
    let us: Vec<f64> = (0..ny).map(|j| u0 + (j as f64 - mid as f64) * du).collect();
    let ys: Vec<f64> = if positive { us.iter().map(|u| u.exp()).collect() } else { us.clone() };

    // Initial data: intrinsic payoff, kink cell-averaged in the solve
    // coordinate (exact payoff is reported on the stored t = 0 level).
    let payoff: Vec<f64> = ys.iter().map(|&y| (x0 - y).max(0.0)).collect();
    let mut c = payoff.clone();
    c[mid] = if positive {
        // (1/du) int_{-du/2}^{du/2} (x0 - x0 e^v)^+ dv
        x0 * (0.5 * du - (1.0 - (-0.5 * du).exp())) / du
    } else {
        du / 8.0
    };

    let (c_bottom, c_top) = (x0 - ys[0], 0.0);
    c[0] = c_bottom;
    c[ny - 1] = c_top;

    // Diffusion coefficient in the solve coordinate at (t, node j):
    //   ln axis: kappa = eta^2 / (2 y^2), operator kappa (C_uu - C_u)
    //   linear:  kappa = eta^2 / 2,       operator kappa C_yy
    let a_of = |t: f64| spec.clock().a(t);
    let ad_of = |t: f64| spec.clock().a_dot(t);
    let kappa_row = |t: f64, out: &mut [f64]| {
        let (a, ad) = (a_of(t), ad_of(t));
        for (j, k) in out.iter_mut().enumerate() {
            let y = ys[j];
            let ratio = eta_sq_over_sigma_sq(law, spec.c(), t, a, ad, y);
            let sig = law.sigma(y);
            *k = if positive {
                0.5 * sig * sig * ratio / (y * y)
            } else {
                0.5 * sig * sig * ratio
            };
        }
    };

    let dt = horizon / grids.n_time as f64;
    let n_interior = ny - 2;
    let mut lower = vec![0.0; n_interior - 1];
    let mut diag = vec![0.0; n_interior];
    let mut upper = vec![0.0; n_interior - 1];
    let mut rhs = vec![0.0; n_interior];
    let mut scratch = Vec::new();
    let mut kap_now = vec![0.0; ny];
    let mut kap_next = vec![0.0; ny];

    // Off-diagonal weights of the spatial operator at node j. On the log
    // axis the stencil for (d_uu - d_u) is exponentially fitted so that the
    // discrete operator annihilates both null solutions 1 and e^u; the
    // intrinsic ramp x0 - y is then an exact steady state and the deep
    // in-the-money region cannot pollute convexity. Same order of accuracy
    // as central differences.
    let fit_minus = 2.0 / (du * du * (1.0 + (-du).exp()));
    let fit_plus = fit_minus * (-du).exp();
    let w_minus = |kap: f64| {
        if positive {
            kap * fit_minus
        } else {
            kap / (du * du)
        }
    };
    let w_plus = |kap: f64| {
        if positive {
            kap * fit_plus
        } else {
            kap / (du * du)
        }
    };
    let w_diag = |kap: f64| {
        if positive {
            -kap * (fit_minus + fit_plus)
        } else {
            -2.0 * kap / (du * du)
        }
    };

    let mut stored_t = vec![0.0];
    let mut stored_vals = payoff.clone();

    // One theta-step of size `step` from `t_from` to `t_from + step`.
    let theta_step = |theta: f64,
                          step: f64,
                          t_from: f64,
                          c: &mut Vec<f64>,
                          kap_now: &mut Vec<f64>,
                          kap_next: &mut Vec<f64>,
                          lower: &mut Vec<f64>,
                          diag: &mut Vec<f64>,
                          upper: &mut Vec<f64>,
                          rhs: &mut Vec<f64>,
                          scratch: &mut Vec<f64>| {
        let t_next = t_from + step;
        if theta < 1.0 {
            kappa_row(t_from, kap_now);
        }
        kappa_row(t_next, kap_next);
        for j in 1..ny - 1 {
            let i = j - 1;
            // explicit part
            let expl = if theta < 1.0 {
                let k = kap_now[j];
                w_minus(k) * c[j - 1] + w_diag(k) * c[j] + w_plus(k) * c[j + 1]
            } else {
                0.0
            };
            rhs[i] = c[j] + (1.0 - theta) * step * expl;
            // implicit part
            let k = kap_next[j];
            diag[i] = 1.0 - theta * step * w_diag(k);
            if i > 0 {
                lower[i - 1] = -theta * step * w_minus(k);
            }
            if i < n_interior - 1 {
                upper[i] = -theta * step * w_plus(k);
            }
        }
        // boundary contributions (boundary values are time-independent)
        rhs[0] += theta * step * w_minus(kap_next[1]) * c_bottom;
        rhs[n_interior - 1] += theta * step * w_plus(kap_next[ny - 2]) * c_top;

        solve_tridiagonal(lower, diag, upper, rhs, scratch);
        c[1..ny - 1].copy_from_slice(rhs);
    };

    // Rannacher start: two fully implicit half-steps over the first step.
    theta_step(1.0, 0.5 * dt, 0.0, &mut c, &mut kap_now, &mut kap_next, &mut lower, &mut diag, &mut upper, &mut rhs, &mut scratch);
    theta_step(1.0, 0.5 * dt, 0.5 * dt, &mut c, &mut kap_now, &mut kap_next, &mut lower, &mut diag, &mut upper, &mut rhs, &mut scratch);
    if grids.store_every == 1 || grids.n_time == 1 {
        stored_t.push(dt);
        stored_vals.extend_from_slice(&c);
    }

    for step_idx in 1..grids.n_time {
        let t_from = dt * step_idx as f64;
        theta_step(0.5, dt, t_from, &mut c, &mut kap_now, &mut kap_next, &mut lower, &mut diag, &mut upper, &mut rhs, &mut scratch);
        let level = step_idx + 1;
        if level % grids.store_every == 0 || level == grids.n_time {
            stored_t.push(dt * level as f64);
            stored_vals.extend_from_slice(&c);
        }
    }

    Ok(CallSurface { t: stored_t, y: ys, values: stored_vals })
}

/// Max absolute gap between the PDE surface's final slice and quadrature
/// call prices of the residual density, over interior nodes.
pub fn dupire_vs_quadrature_error(spec: &FakeSpec, surface: &CallSurface) -> Result<f64> {
    let horizon = *surface.times().last().unwrap();
    let residual = ResidualLaw::new(spec);
    let terminal = surface.terminal();
    let errs: Vec<f64> = surface.states()[1..surface.states().len() - 1]
        .par_iter()
        .enumerate()
        .map(|(i, &y)| -> Result<f64> {
            let q = residual.call_quadrature(horizon, y)?;
            Ok((terminal[i + 1] - q).abs())
        })
        .collect::<Result<_>>()?;
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// Max absolute gap between the surface's final slice and the reference
/// law's closed-form call prices, over interior nodes. Meaningful for a
/// degenerate spec (c -> 0), where the residual diffusion is the reference
/// process itself.
pub fn dupire_vs_closed_form_error(spec: &FakeSpec, surface: &CallSurface) -> f64 {
    let law = spec.law();
    let t = *surface.times().last().unwrap();
    let level = surface.terminal();
    let mut worst: f64 = 0.0;
    for (j, &y) in surface.states().iter().enumerate().skip(1).take(surface.states().len() - 2) {
        worst = worst.max((level[j] - law.call(t, y)).abs());
    }
    worst
}

/// Solve on two grids (the second halving both steps) and return the ratio
/// of max interior errors against quadrature prices; a second-order scheme
/// yields about four.
pub fn dupire_convergence_ratio(spec: &FakeSpec, horizon: f64, coarse: &DupireGrids) -> Result<f64> {
    let fine = DupireGrids {
        n_space: coarse.n_space * 2 - 1,
        n_time: coarse.n_time * 2,
        store_every: coarse.store_every * 2,
    };
    let s_coarse = solve_dupire(spec, horizon, coarse)?;
    let s_fine = solve_dupire(spec, horizon, &fine)?;
    let e_coarse = dupire_vs_quadrature_error(spec, &s_coarse)?;
    let e_fine = dupire_vs_quadrature_error(spec, &s_fine)?;
    Ok(e_coarse / e_fine)
}

// ---------------------------------------------------------------------------
// Convex order
// ---------------------------------------------------------------------------

/// Outcome of the convex-order scan.
#[derive(Debug, Clone, Copy)]
pub struct ConvexOrderReport {
    /// Min over the grid of `(sigma^2/2)(f_t - c a' f_{a})/(1-c)`.
    pub integrand_min: f64,
    /// Min over the grid of the finite-difference time derivative of the
    /// residual call prices computed by quadrature.
    pub fd_min: f64,
    /// Worst relative gap between the two (the Carr-Jarrow consistency).
    pub worst_rel_gap: f64,
    pub nodes: usize,
}

impl ConvexOrderReport {
    pub fn pass(&self) -> bool {
        self.integrand_min > 0.0 && self.fd_min > 0.0
    }
}

/// Scan the convex-order certificate over `times x n_states` audit nodes:
/// integrand positivity everywhere, and positivity of the centred
/// finite-difference time derivative of quadrature call prices.
pub fn convex_order_check(spec: &FakeSpec, times: &[f64], n_states: usize) -> Result<ConvexOrderReport> {
    let residual = ResidualLaw::new(spec);
    // The finite difference divides out the step, so the quadrature must
    // keep full relative accuracy even on deep-tail prices (no absolute
    // floor), and the step stays small against the curvature scale t.
    let opts = crate::numerics::QuadratureOpts {
        rel_tol: 1e-10,
        abs_tol: 1e-300,
        max_evals: 1 << 22,
    };
    let per_time: Vec<(f64, f64, f64, usize)> = times
        .par_iter()
        .map(|&t| -> Result<(f64, f64, f64, usize)> {
            let mut integ_min = f64::INFINITY;
            let mut fd_min = f64::INFINITY;
            let mut gap: f64 = 0.0;
            let dt = 2e-4 * t;
            let states = audit_states(spec.law(), t, AUDIT_WIDTH_SD, n_states);
            let x0 = spec.law().x0();
            for &y in &states {
                let integrand = convex_order_integrand(spec, t, y);
                integ_min = integ_min.min(integrand);
                // Put-call parity: d/dt of call and put agree, and the put
                // side is the numerically small one for strikes below x0.
                let (up, dn) = if y <= x0 {
                    (
                        residual.put_quadrature_with(t + dt, y, &opts)?,
                        residual.put_quadrature_with(t - dt, y, &opts)?,
                    )
                } else {
                    (
                        residual.call_quadrature_with(t + dt, y, &opts)?,
                        residual.call_quadrature_with(t - dt, y, &opts)?,
                    )
                };
                let fd = (up - dn) / (2.0 * dt);
                fd_min = fd_min.min(fd);
                gap = gap.max((fd - integrand).abs() / integrand.abs().max(1e-300));
            }
            Ok((integ_min, fd_min, gap, states.len()))
        })
        .collect::<Result<_>>()?;

    let mut report = ConvexOrderReport {
        integrand_min: f64::INFINITY,
        fd_min: f64::INFINITY,
        worst_rel_gap: 0.0,
        nodes: 0,
    };
    for (i_min, f_min, gap, n) in per_time {
        report.integrand_min = report.integrand_min.min(i_min);
        report.fd_min = report.fd_min.min(f_min);
        report.worst_rel_gap = report.worst_rel_gap.max(gap);
        report.nodes += n;
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Full verification battery
// ---------------------------------------------------------------------------

/// Budgets and thresholds of [`full_verification`]. Every statistical
/// threshold is derived from a stated `(alpha, n)` pair plus an explicit
/// discretization allowance.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyConfig {
    pub seed: u64,
    pub n_paths: usize,
    /// Scheme steps per unit time at the reference budget; scaled by
    /// `L^2 / 2` for wilder specs so the discretization allowance stays
    /// honest.
    pub n_steps: usize,
    pub horizon: f64,
    pub check_times: Vec<f64>,
    pub pde: DupireGrids,
    /// One-sample KS level for the marginal checks.
    pub alpha_marginal: f64,
    /// Additive allowance on the marginal KS thresholds for scheme bias
    /// (0.0047 reproduces the 0.012 budget at alpha = 0.01, n = 5e4).
    pub ks_bias_allowance: f64,
    /// Two-sample KS level for the quadratic-variation separation.
    pub alpha_qv: f64,
    /// Max absolute PDE-vs-quadrature gap on interior nodes.
    pub pde_tolerance: f64,
    /// Max absolute gap of the degenerate (c -> 0) solve vs closed form.
    pub pde_degenerate_tolerance: f64,
    /// Statistical checks below this sample size only warn.
    pub min_power_paths: usize,
    /// Multiplies `eta` inside the simulator; a negative-control hook,
    /// 1.0 for real runs.
    pub eta_scale: f64,
    pub include_madan_yor: bool,
    pub madan_yor_paths: usize,
    pub madan_yor_step: f64,
    /// Additive allowance on the embedded-marginal KS thresholds for the
    /// first-passage discretization (0.0077 reproduces 0.015 at n = 5e4).
    pub my_bias_allowance: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_paths: 50_000,
            n_steps: 1000,
            horizon: 1.0,
            check_times: vec![0.25, 0.5, 1.0],
            pde: DupireGrids::default(),
            alpha_marginal: 0.01,
            ks_bias_allowance: 0.0047,
            alpha_qv: 1e-6,
            pde_tolerance: 1e-3,
            pde_degenerate_tolerance: 5e-4,
            min_power_paths: 1000,
            eta_scale: 1.0,
            include_madan_yor: false,
            madan_yor_paths: 50_000,
            madan_yor_step: 1e-4,
            my_bias_allowance: 0.0077,
        }
    }
}

impl VerifyConfig {
    /// Marginal KS threshold: asymptotic critical value plus bias budget.
    pub fn marginal_ks_threshold(&self) -> f64 {
        ks_critical(self.alpha_marginal, self.n_paths) + self.ks_bias_allowance
    }

    /// Scheme steps after scaling with the spec's `L^2` (reference
    /// `L^2 = 2`). The scale is an integer multiplier so check times on
    /// the base grid stay on the scaled grid.
    pub fn scaled_steps(&self, spec: &FakeSpec) -> usize {
        let scale = (spec.l_squared() / 2.0).max(1.0).ceil() as usize;
        self.n_steps * scale
    }

    /// PDE budgets after scaling with `L^2`: time steps grow with `L^2/2`,
    /// space nodes with `L/sqrt(2)` (the domain width grows with `L`).
    pub fn scaled_pde(&self, spec: &FakeSpec) -> DupireGrids {
        let l2 = spec.l_squared();
        let t_scale = (l2 / 2.0).max(1.0);
        let s_scale = (l2 / 2.0).sqrt().max(1.0);
        let n_time = (self.pde.n_time as f64 * t_scale).ceil() as usize;
        let mut n_space = (self.pde.n_space as f64 * s_scale).ceil() as usize;
        if n_space % 2 == 0 {
            n_space += 1;
        }
        let store_every = (n_time / 400).max(1);
        DupireGrids { n_space, n_time, store_every }
    }
}

/// One line of the verification report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckEntry {
    pub check: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Underpowered statistical checks warn instead of failing.
    pub warning: bool,
}

/// Environment stamp echoed into the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportConfig {
    pub law: String,
    pub clock: String,
    pub k: f64,
    pub c: f64,
    pub l_squared: f64,
    pub seed: u64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub horizon: f64,
    pub check_times: Vec<f64>,
    pub grids: ReportGrids,
    pub alpha_marginal: f64,
    pub alpha_qv: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportGrids {
    pub audit_times: usize,
    pub audit_states: usize,
    pub pde_space: usize,
    pub pde_time: usize,
}

/// Structured outcome of [`full_verification`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub config: ReportConfig,
    pub checks: Vec<CheckEntry>,
}

impl VerificationReport {
    /// True when no non-warning check failed.
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass || c.warning)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    fn push(&mut self, check: &str, statistic: f64, threshold: f64, pass: bool, warning: bool) {
        self.checks.push(CheckEntry {
            check: check.to_string(),
            statistic,
            threshold,
            pass,
            warning,
        });
    }
}

/// Run the whole battery: mixture identity, eta bounds, clock identities,
/// residual mass/mean, convex order, the PDE cross-check, Monte Carlo
/// marginals and means, the quadratic-variation fakeness witness, and
/// (optionally) the embedded-process checks.
pub fn full_verification(spec: &FakeSpec, cfg: &VerifyConfig) -> Result<VerificationReport> {
    let law = spec.law();
    let times = audit_times();
    let pde_grids = cfg.scaled_pde(spec);
    let mut report = VerificationReport {
        config: ReportConfig {
            law: law.name().to_string(),
            clock: spec.clock().kind_name().to_string(),
            k: spec.ratio_bound(),
            c: spec.c(),
            l_squared: spec.l_squared(),
            seed: cfg.seed,
            n_paths: cfg.n_paths,
            n_steps: cfg.scaled_steps(spec),
            horizon: cfg.horizon,
            check_times: cfg.check_times.clone(),
            grids: ReportGrids {
                audit_times: times.len(),
                audit_states: AUDIT_STATES,
                pde_space: pde_grids.n_space,
                pde_time: pde_grids.n_time,
            },
            alpha_marginal: cfg.alpha_marginal,
            alpha_qv: cfg.alpha_qv,
        },
        checks: Vec::new(),
    };

    // --- mixture identity and eta bounds over the audit grid -------------
    let mut identity_worst: f64 = 0.0;
    let mut eta_violations = 0usize;
    let mut eta_x0_worst: f64 = 0.0;
    for &t in &times {
        let a = spec.clock().a(t);
        let ad = spec.clock().a_dot(t);
        for y in audit_states(law, t, AUDIT_WIDTH_SD, AUDIT_STATES) {
            let f_t = law.density(t, y);
            let f_a = law.density(a, y);
            let h = residual_density(spec, t, y)?;
            identity_worst =
                identity_worst.max(((spec.c() * f_a + (1.0 - spec.c()) * h - f_t) / f_t).abs());

            let r = (law.log_density(a, y) - law.log_density(t, y)).exp();
            let denom = 1.0 - spec.c() * r;
            let excess_over_one = spec.c() * r * (1.0 - ad) / denom;
            let gap_to_mid = spec.c() * ad * r / denom;
            let mid = 1.0 / denom;
            if !(excess_over_one > 0.0)
                || !(gap_to_mid > 0.0)
                || mid > spec.l_squared() * (1.0 + 1e-12)
            {
                eta_violations += 1;
            }
        }
        let want = (1.0 - spec.c() * ad / spec.ratio_bound()) / (1.0 - spec.c() / spec.ratio_bound());
        let got = eta_sq_over_sigma_sq(law, spec.c(), t, a, ad, law.x0());
        eta_x0_worst = eta_x0_worst.max((got - want).abs());
    }
    report.push("mixture_identity_max_rel_err", identity_worst, 1e-14, identity_worst < 1e-14, false);
    report.push("eta_bounds_violations", eta_violations as f64, 0.5, eta_violations == 0, false);
    report.push("eta_closed_form_at_x0", eta_x0_worst, 1e-12, eta_x0_worst < 1e-12, false);

    // --- clock identities -------------------------------------------------
    let mut clock_worst: f64 = 0.0;
    let mut fd_worst: f64 = 0.0;
    let mut a_dot_max: f64 = 0.0;
    for &t in &times {
        let a = spec.clock().a(t);
        match spec.clock().kind_name() {
            "exponential-brownian" => {
                let k = spec.clock().analytic_ratio_bound().unwrap();
                let rhs = k * psi(t).unwrap();
                clock_worst = clock_worst.max((psi(a).unwrap() - rhs).abs() / rhs);
            }
            "brownian" => {
                let k = spec.clock().analytic_ratio_bound().unwrap();
                clock_worst = clock_worst.max((a - k * k * t).abs() / (k * k * t));
            }
            _ => {}
        }
        let h = 1e-5 * t;
        let fd = (spec.clock().a(t + h) - spec.clock().a(t - h)) / (2.0 * h);
        let ad = spec.clock().a_dot(t);
        fd_worst = fd_worst.max((ad - fd).abs());
        a_dot_max = a_dot_max.max(ad);
    }
    report.push("clock_identity_max_rel_err", clock_worst, 1e-12, clock_worst < 1e-12, false);
    report.push("clock_speed_fd_max_err", fd_worst, 1e-6, fd_worst < 1e-6, false);
    report.push("clock_speed_max", a_dot_max, 1.0, a_dot_max < 1.0, false);

    // --- residual mass and mean -------------------------------------------
    let mut mass_worst: f64 = 0.0;
    let mut mean_worst: f64 = 0.0;
    for &t in &[0.1, 0.25, 1.0, 4.0] {
        let (mass, mean) = residual_moments(spec, t)?;
        mass_worst = mass_worst.max((mass - 1.0).abs());
        mean_worst = mean_worst.max((mean - law.x0()).abs());
    }
    report.push("residual_mass_max_err", mass_worst, 1e-9, mass_worst < 1e-9, false);
    report.push("residual_mean_max_err", mean_worst, 1e-9, mean_worst < 1e-9, false);

    // --- convex order ------------------------------------------------------
    let convex = convex_order_check(spec, &times, AUDIT_STATES)?;
    report.push("convex_order_integrand_min", convex.integrand_min, 0.0, convex.integrand_min > 0.0, false);
    report.push("convex_order_fd_min", convex.fd_min, 0.0, convex.fd_min > 0.0, false);

    // --- PDE cross-check ---------------------------------------------------
    let surface = solve_dupire(spec, cfg.horizon, &pde_grids)?;
    let pde_err = dupire_vs_quadrature_error(spec, &surface)?;
    report.push("pde_vs_quadrature_max_abs_err", pde_err, cfg.pde_tolerance, pde_err < cfg.pde_tolerance, false);
    let viol = surface.invariant_violations(spec);
    report.push("pde_surface_invariants_max_violation", viol.max(), 1e-10, viol.max() < 1e-10, false);

    let degenerate = validate_spec(*law, spec.clock().clone(), 1e-12)?;
    let deg_surface = solve_dupire(&degenerate, cfg.horizon, &pde_grids)?;
    let deg_err = dupire_vs_closed_form_error(&degenerate, &deg_surface);
    report.push(
        "pde_degenerate_vs_closed_form_max_abs_err",
        deg_err,
        cfg.pde_degenerate_tolerance,
        deg_err < cfg.pde_degenerate_tolerance,
        false,
    );

    // --- Monte Carlo battery ------------------------------------------------
    let underpowered = cfg.n_paths < cfg.min_power_paths;
    let n_steps = cfg.scaled_steps(spec);
    let fake = scan(&ScanCfg {
        spec,
        kind: EnsembleKind::Fake,
        horizon: cfg.horizon,
        n_fine: n_steps,
        factor: 1,
        n_paths: cfg.n_paths,
        seed: cfg.seed,
        eta_scale: cfg.eta_scale,
        check_times: cfg.check_times.clone(),
    })?;
    let ks_threshold = cfg.marginal_ks_threshold();
    for (i, &t) in fake.check_times.iter().enumerate() {
        let (d, _) = ks_test(&fake.samples[i], |x| law.cdf(t, x))?;
        report.push(
            &format!("mc_marginal_ks_t{t}"),
            d,
            ks_threshold,
            d < ks_threshold,
            underpowered,
        );
    }
    let mut max_z: f64 = 0.0;
    for i in 1..fake.times.len() {
        let z = (fake.mean[i] - law.x0()).abs() / fake.se[i];
        max_z = max_z.max(z);
    }
    report.push("mc_mean_max_z", max_z, 3.0, max_z < 3.0, underpowered);

    let labels = fake.labels.as_ref().expect("fake scan carries labels");
    let g_frac = labels.iter().filter(|c| **c == Component::Slowed).count() as f64
        / labels.len() as f64;
    let g_se = (spec.c() * (1.0 - spec.c()) / labels.len() as f64).sqrt();
    report.push(
        "fake_g_fraction_err",
        (g_frac - spec.c()).abs(),
        3.0 * g_se,
        (g_frac - spec.c()).abs() < 3.0 * g_se,
        underpowered,
    );

    if law.support() == Support::PositiveHalfLine {
        let exact = scan(&ScanCfg {
            spec,
            kind: EnsembleKind::Exact,
            horizon: cfg.horizon,
            n_fine: n_steps,
            factor: 1,
            n_paths: cfg.n_paths,
            seed: cfg.seed.wrapping_add(1),
            eta_scale: 1.0,
            check_times: vec![cfg.horizon],
        })?;
        let qv_fake = fake.log_qv.as_ref().expect("positive law has log-QV");
        let qv_exact = exact.log_qv.as_ref().expect("positive law has log-QV");
        let d = ks2_statistic(qv_fake, qv_exact)?;
        let crit = ks2_critical(cfg.alpha_qv, qv_fake.len(), qv_exact.len());
        // Success here is *rejection*: the QV laws must differ.
        report.push("qv_two_sample_ks_rejects", d, crit, d > crit, underpowered);

        let cut = (spec.clock().a(cfg.horizon) + cfg.horizon) / 2.0;
        let below = qv_fake.iter().filter(|&&q| q < cut).count() as f64 / qv_fake.len() as f64;
        let se = (spec.c() * (1.0 - spec.c()) / qv_fake.len() as f64).sqrt();
        report.push(
            "qv_split_fraction_err",
            (below - spec.c()).abs(),
            3.0 * se,
            (below - spec.c()).abs() < 3.0 * se,
            underpowered,
        );
    }

    // --- embedded process (optional) ----------------------------------------
    if cfg.include_madan_yor {
        if law.support() != Support::PositiveHalfLine {
            return Err(Error::UnsupportedLaw(
                "the embedded construction targets the lognormal family".into(),
            ));
        }
        let emb = crate::embed::madan_yor_paths(&crate::embed::EmbedConfig {
            report_times: cfg.check_times.clone(),
            n_paths: cfg.madan_yor_paths,
            bm_step: cfg.madan_yor_step,
            step_budget: 10_000_000,
            seed: cfg.seed,
        })?;
        let my_under = cfg.madan_yor_paths < cfg.min_power_paths;
        let my_threshold = ks_critical(cfg.alpha_marginal, cfg.madan_yor_paths) + cfg.my_bias_allowance;
        for (j, &t) in emb.report_times().iter().enumerate() {
            let samples: Vec<f64> = emb.values_at(j).collect();
            let (d, _) = ks_test(&samples, |x| law.cdf(t, x))?;
            report.push(&format!("embed_marginal_ks_t{t}"), d, my_threshold, d < my_threshold, my_under);
            let (mean, se) = emb.mean_and_se(j);
            let z = (mean - law.x0()).abs() / se;
            report.push(&format!("embed_mean_z_t{t}"), z, 3.0, z < 3.0, my_under);
        }
        let mut monotone_violations = 0usize;
        for i in 0..emb.n_paths() {
            for j in 1..emb.report_times().len() {
                if emb.stop_step(i, j) < emb.stop_step(i, j - 1) {
                    monotone_violations += 1;
                }
            }
        }
        report.push(
            "embed_stop_monotone_violations",
            monotone_violations as f64,
            0.5,
            monotone_violations == 0,
            false,
        );
        report.push(
            "embed_budget_exhausted_paths",
            emb.exhausted_paths().len() as f64,
            0.5,
            emb.exhausted_paths().is_empty(),
            false,
        );
    }

    Ok(report)
}

/// Zeroth and first moment of the residual density by quadrature.
fn residual_moments(spec: &FakeSpec, t: f64) -> Result<(f64, f64)> {
    let law = spec.law();
    let opts = crate::numerics::QuadratureOpts::default();
    match law.support() {
        Support::PositiveHalfLine => {
            let s = t.sqrt();
            let (lo, hi) = (-0.5 * t - 10.0 * s, -0.5 * t + (10.0 + s) * s);
            let mass = crate::numerics::integrate(
                |u| residual_density(spec, t, u.exp()).unwrap() * u.exp(),
                lo,
                hi,
                &opts,
            )?;
            let mean = crate::numerics::integrate(
                |u| u.exp() * residual_density(spec, t, u.exp()).unwrap() * u.exp(),
                lo,
                hi,
                &opts,
            )?;
            Ok((mass, mean))
        }
        Support::RealLine => {
            let w = 10.0 * t.sqrt();
            let mass = crate::numerics::integrate(|y| residual_density(spec, t, y).unwrap(), -w, w, &opts)?;
            let mean =
                crate::numerics::integrate(|y| y * residual_density(spec, t, y).unwrap(), -w, w, &opts)?;
            Ok((mass, mean))
        }
    }
}

/// KS statistics of coupled fake-ensemble marginals at the horizon as the
/// scheme is refined: the same fine-grid Brownian increments drive every
/// refinement level, so the sequence isolates discretization bias.
pub fn marginal_refinement_study(
    spec: &FakeSpec,
    horizon: f64,
    fine_steps: usize,
    factors: &[usize],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    let law = spec.law();
    let mut out = Vec::with_capacity(factors.len());
    for &factor in factors {
        let s = scan(&ScanCfg {
            spec,
            kind: EnsembleKind::Fake,
            horizon,
            n_fine: fine_steps,
            factor,
            n_paths,
            seed,
            eta_scale: 1.0,
            check_times: vec![horizon],
        })?;
        let (d, _) = ks_test(&s.samples[0], |x| law.cdf(horizon, x))?;
        out.push((fine_steps / factor, d));
    }
    Ok(out)
}
