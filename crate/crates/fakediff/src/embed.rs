//! A discontinuous process with lognormal marginals, built by stopping a
//! Brownian motion on nested barycentre domains.
//!
//! For each target time `t` the stopping rule halts the Brownian path `B`
//! (started at 1, with running maximum `M`) the first time
//! `M >= b_t(B)`, where `b_t(x) = E[P_t | P_t >= x]` is the barycentre of
//! the unit-mean lognormal marginal. The stopped value then has exactly
//! that marginal. Because `b_t` is pointwise non-decreasing in `t`
//! (increasing residual mean life), the domains are nested and the
//! stopping times non-decreasing, so evaluating one path against a grid of
//! report times yields a martingale with the reference marginals at each
//! report time. Unlike the mixture construction this process jumps.

use crate::error::{Error, Result};
use crate::numerics::norm_cdf;
use crate::simulate::embed_substream;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Below this value of `delta_minus` the normal CDF quotient underflows and
/// the Mills-ratio asymptotic takes over.
const MILLS_SWITCH: f64 = -37.0;

/// Barycentre of the unit-mean lognormal at time `t`:
/// `b_t(x) = Phi(d+) / Phi(d-)` with `d± = -ln(x)/sqrt(t) ± sqrt(t)/2`.
///
/// For `x` deep in the upper tail, where both CDFs underflow, the quotient
/// is continued with the Mills-ratio expansion, which preserves
/// `b_t(x) >= x` without ever forming 0/0.
pub fn barycentre_lognormal(t: f64, x: f64) -> Result<f64> {
    if t <= 0.0 {
        return Err(Error::Domain(format!("barycentre requires t > 0, got {t}")));
    }
    if x <= 0.0 {
        return Err(Error::Domain(format!("barycentre requires x > 0, got {x}")));
    }
    let s = t.sqrt();
    let d_plus = -x.ln() / s + 0.5 * s;
    let d_minus = d_plus - s;
    if d_minus > MILLS_SWITCH {
        Ok(norm_cdf(d_plus) / norm_cdf(d_minus))
    } else {
        // Phi(d) = phi(d) R(-d) for d << 0, so the quotient telescopes to
        // x * R(-d+) / R(-d-).
        Ok(x * mills(-d_plus) / mills(-d_minus))
    }
}

/// Mills ratio `Phi(-z)/phi(z)` for large positive `z`.
fn mills(z: f64) -> f64 {
    let z2 = z * z;
    (1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2)) / z
}

/// The stopping boundary for one report time, with a fast tabulated lookup
/// used inside the path loop.
#[derive(Debug, Clone)]
pub struct BarycentreCurve {
    t: f64,
    ln_lo: f64,
    ln_hi: f64,
    step: f64,
    table: Vec<f64>,
}

impl BarycentreCurve {
    pub fn new(t: f64) -> Result<Self> {
        if t <= 0.0 {
            return Err(Error::Domain(format!("barycentre curve requires t > 0, got {t}")));
        }
        let (ln_lo, ln_hi, step) = (-14.0f64, 14.0f64, 5e-3f64);
        let n = ((ln_hi - ln_lo) / step).round() as usize + 1;
        let table = (0..n)
            .map(|i| barycentre_lognormal(t, (ln_lo + step * i as f64).exp()).unwrap())
            .collect();
        Ok(Self { t, ln_lo, ln_hi, step, table })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Exact barycentre value; `1` for `x <= 0` (conditioning on the whole
    /// support returns the mean).
    pub fn value(&self, x: f64) -> f64 {
        if x <= 0.0 {
            1.0
        } else {
            barycentre_lognormal(self.t, x).unwrap()
        }
    }

    /// Tabulated boundary lookup for the hot path loop; falls back to the
    /// exact formula outside the table.
    #[inline]
    fn lookup(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        let u = x.ln();
        if u < self.ln_lo {
            return 1.0 + (self.table[0] - 1.0) * ((u - self.ln_lo).exp());
        }
        if u >= self.ln_hi {
            return self.value(x);
        }
        let f = (u - self.ln_lo) / self.step;
        let i = f as usize;
        let w = f - i as f64;
        self.table[i] * (1.0 - w) + self.table[i + 1] * w
    }
}

/// Configuration for [`madan_yor_paths`].
#[derive(Debug, Clone)]
pub struct EmbedConfig {
    /// Strictly increasing report times.
    pub report_times: Vec<f64>,
    pub n_paths: usize,
    /// Euler step of the underlying Brownian motion.
    pub bm_step: f64,
    /// Per-path cap on Brownian steps; exceeding it is reported, never
    /// silently truncated.
    pub step_budget: u64,
    pub seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            report_times: vec![0.25, 0.5, 1.0],
            n_paths: 50_000,
            bm_step: 1e-4,
            step_budget: 10_000_000,
            seed: 42,
        }
    }
}

/// Stopped values of the embedded process at the report times.
#[derive(Debug, Clone)]
pub struct EmbeddedProcess {
    report_times: Vec<f64>,
    /// Row-major: path `i`, report `j` at `values[i * n_reports + j]`.
    values: Vec<f64>,
    stop_steps: Vec<u64>,
    bm_step: f64,
    seed: u64,
    exhausted: Vec<usize>,
}

impl EmbeddedProcess {
    pub fn report_times(&self) -> &[f64] {
        &self.report_times
    }
    pub fn n_paths(&self) -> usize {
        self.values.len() / self.report_times.len()
    }
    pub fn bm_step(&self) -> f64 {
        self.bm_step
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    /// Paths whose step budget ran out before the last report time.
    pub fn exhausted_paths(&self) -> &[usize] {
        &self.exhausted
    }
    pub fn value(&self, path: usize, report: usize) -> f64 {
        self.values[path * self.report_times.len() + report]
    }
    pub fn stop_step(&self, path: usize, report: usize) -> u64 {
        self.stop_steps[path * self.report_times.len() + report]
    }
    pub fn values_at(&self, report: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_paths()).map(move |i| self.value(i, report))
    }
    pub fn mean_and_se(&self, report: usize) -> (f64, f64) {
        let n = self.n_paths() as f64;
        let (mut s, mut s2) = (0.0, 0.0);
        for v in self.values_at(report) {
            s += v;
            s2 += v * v;
        }
        let mean = s / n;
        let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
        (mean, (var / n).sqrt())
    }
}

/// Simulate the embedded process: one Brownian path per path id, stopped
/// successively on each report time's barycentre domain.
pub fn madan_yor_paths(cfg: &EmbedConfig) -> Result<EmbeddedProcess> {
    if cfg.report_times.is_empty() {
        return Err(Error::Config("need at least one report time".into()));
    }
    if cfg.report_times.windows(2).any(|w| w[1] <= w[0]) || cfg.report_times[0] <= 0.0 {
        return Err(Error::Config(format!(
            "report times must be positive and strictly increasing: {:?}",
            cfg.report_times
        )));
    }
    if !(cfg.bm_step > 0.0) {
        return Err(Error::Config(format!("bm_step must be positive, got {}", cfg.bm_step)));
    }

    let curves: Vec<BarycentreCurve> = cfg
        .report_times
        .iter()
        .map(|&t| BarycentreCurve::new(t))
        .collect::<Result<_>>()?;

    let n_reports = cfg.report_times.len();
    let sqrt_dt = cfg.bm_step.sqrt();
    const BATCH: usize = 256;
    let n_batches = cfg.n_paths.div_ceil(BATCH);

    struct BatchOut {
        values: Vec<f64>,
        steps: Vec<u64>,
        exhausted: Vec<usize>,
    }

    let batches: Vec<BatchOut> = (0..n_batches)
        .into_par_iter()
        .map(|batch| {
            let lo = batch * BATCH;
            let hi = ((batch + 1) * BATCH).min(cfg.n_paths);
            let mut out = BatchOut {
                values: Vec::with_capacity((hi - lo) * n_reports),
                steps: Vec::with_capacity((hi - lo) * n_reports),
                exhausted: Vec::new(),
            };
            for path_id in lo..hi {
                let mut rng = embed_substream(cfg.seed, path_id as u64);
                let mut b = 1.0f64;
                let mut m = 1.0f64;
                let mut step: u64 = 0;
                let mut ran_out = false;
                for curve in &curves {
                    if !ran_out {
                        while m < curve.lookup(b) {
                            if step >= cfg.step_budget {
                                ran_out = true;
                                break;
                            }
                            let z: f64 = rng.sample(StandardNormal);
                            b += sqrt_dt * z;
                            if b > m {
                                m = b;
                            }
                            step += 1;
                        }
                    }
                    out.values.push(b);
                    out.steps.push(step);
                }
                if ran_out {
                    out.exhausted.push(path_id);
                }
            }
            out
        })
        .collect();

    let mut values = Vec::with_capacity(cfg.n_paths * n_reports);
    let mut stop_steps = Vec::with_capacity(cfg.n_paths * n_reports);
    let mut exhausted = Vec::new();
    for b in batches {
        values.extend(b.values);
        stop_steps.extend(b.steps);
        exhausted.extend(b.exhausted);
    }

    Ok(EmbeddedProcess {
        report_times: cfg.report_times.clone(),
        values,
        stop_steps,
        bm_step: cfg.bm_step,
        seed: cfg.seed,
        exhausted,
    })
}

/// Outcome of the residual-mean-life order scan.
#[derive(Debug, Clone, Copy)]
pub struct MrlReport {
    pub pass: bool,
    /// Smallest increment of `b_t(x)` over consecutive times; negative
    /// means a violation.
    pub worst_diff: f64,
    /// `(t_lower, t_upper, x)` where the worst increment occurred.
    pub at: (f64, f64, f64),
}

/// Check that the supplied barycentre function is pointwise non-decreasing
/// in `t` on the grid. Generic so adversarial families can be fed in as a
/// negative control.
pub fn check_mrl_order_with<F: Fn(f64, f64) -> f64>(b: F, t_grid: &[f64], x_grid: &[f64]) -> MrlReport {
    let mut worst = f64::INFINITY;
    let mut at = (f64::NAN, f64::NAN, f64::NAN);
    if t_grid.len() < 2 {
        return MrlReport { pass: true, worst_diff: f64::INFINITY, at };
    }
    for &x in x_grid {
        for w in t_grid.windows(2) {
            let d = b(w[1], x) - b(w[0], x);
            if d < worst {
                worst = d;
                at = (w[0], w[1], x);
            }
        }
    }
    MrlReport { pass: worst >= 0.0, worst_diff: worst, at }
}

/// [`check_mrl_order_with`] for the lognormal barycentre family.
pub fn check_mrl_order(t_grid: &[f64], x_grid: &[f64]) -> MrlReport {
    check_mrl_order_with(|t, x| barycentre_lognormal(t, x).unwrap(), t_grid, x_grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::DiffusionLaw;
    use crate::numerics::{integrate, log_spaced, QuadratureOpts};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn barycentre_reference_value() {
        // Phi(1/2) / Phi(-1/2)
        let want = norm_cdf(0.5) / norm_cdf(-0.5);
        let got = barycentre_lognormal(1.0, 1.0).unwrap();
        assert_relative_eq!(got, want, epsilon = 1e-15);
        assert!((got - 2.24110).abs() < 1e-5);
    }

    #[test]
    fn barycentre_tends_to_mean_at_zero() {
        assert!((barycentre_lognormal(1.0, 1e-12).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn barycentre_domain_errors() {
        assert!(barycentre_lognormal(0.0, 1.0).is_err());
        assert!(barycentre_lognormal(1.0, 0.0).is_err());
        assert!(barycentre_lognormal(1.0, -1.0).is_err());
    }

    /// Quadrature oracle: E[P; P >= x] / P(P >= x) from the density.
    fn barycentre_quadrature(t: f64, x: f64) -> f64 {
        let law = crate::laws::ExponentialBmLaw;
        // The conditional integrals can be ~1e-10, so the absolute floor
        // must sit far below them for the relative target to govern.
        let opts = QuadratureOpts { rel_tol: 1e-11, abs_tol: 1e-280, max_evals: 1 << 22 };
        // Upper cut far enough out that the dropped tail is negligible
        // relative to the conditional mass above x itself.
        let s = t.sqrt();
        let hi = (0.5 * t + (8.0 + s) * s).exp().max(x * ((9.0 + s) * s).exp());
        let num = integrate(
            |u| u.exp() * law.density(t, u.exp()) * u.exp(),
            x.ln(),
            hi.ln(),
            &opts,
        )
        .unwrap();
        let den = integrate(|u| law.density(t, u.exp()) * u.exp(), x.ln(), hi.ln(), &opts).unwrap();
        num / den
    }

    #[test]
    fn barycentre_matches_quadrature() {
        for t in [0.25, 1.0, 4.0] {
            for x in log_spaced(0.05, 20.0, 9) {
                let closed = barycentre_lognormal(t, x).unwrap();
                let quad = barycentre_quadrature(t, x);
                assert!(
                    (closed - quad).abs() < 1e-8 * closed.max(1.0),
                    "t={t} x={x}: {closed} vs {quad}"
                );
            }
        }
    }

    #[test]
    fn barycentre_deep_tail_guard() {
        let t = 0.25f64;
        // delta_minus = -37 at ln x = 37 sqrt(t) - t/2; straddle it and
        // require the two branches to agree on b(x)/x.
        let x_at = (37.0f64 * t.sqrt() - t / 2.0).exp();
        let below = barycentre_lognormal(t, x_at * 0.9999).unwrap();
        let above = barycentre_lognormal(t, x_at * 1.0001).unwrap();
        assert!(
            (below / (x_at * 0.9999) - above / (x_at * 1.0001)).abs() < 1e-6,
            "{} vs {}",
            below / (x_at * 0.9999),
            above / (x_at * 1.0001)
        );

        let huge = (40.0f64).exp();
        let b = barycentre_lognormal(t, huge).unwrap();
        assert!(b.is_finite() && b >= huge);
    }

    #[test]
    fn mrl_order_holds_for_lognormal() {
        let report = check_mrl_order(&log_spaced(0.1, 4.0, 24), &log_spaced(0.05, 20.0, 60));
        assert!(report.pass, "worst {:?} at {:?}", report.worst_diff, report.at);
        assert!(report.worst_diff >= 0.0);
    }

    #[test]
    fn mrl_order_single_time_trivially_passes() {
        let report = check_mrl_order(&[1.0], &log_spaced(0.1, 10.0, 16));
        assert!(report.pass);
    }

    #[test]
    fn mrl_order_flags_adversarial_family() {
        // barycentre artificially decreasing in t
        let report = check_mrl_order_with(
            |t, x| barycentre_lognormal(1.0 / t, x).unwrap(),
            &[0.5, 1.0, 2.0],
            &log_spaced(0.2, 5.0, 16),
        );
        assert!(!report.pass);
        assert!(report.worst_diff < 0.0);
        assert!(report.at.2 > 0.0);
    }

    #[test]
    fn curve_lookup_matches_exact() {
        let curve = BarycentreCurve::new(0.7).unwrap();
        for x in log_spaced(1e-4, 1e4, 200) {
            let exact = curve.value(x);
            let fast = curve.lookup(x);
            assert!(
                (fast - exact).abs() < 2e-5 * exact,
                "x={x}: {fast} vs {exact}"
            );
        }
    }

    #[test]
    fn embedded_process_small_run() {
        let cfg = EmbedConfig {
            report_times: vec![0.25, 1.0],
            n_paths: 1500,
            bm_step: 1e-3,
            step_budget: 10_000_000,
            seed: 42,
        };
        let emb = madan_yor_paths(&cfg).unwrap();
        assert!(emb.exhausted_paths().is_empty());

        for (j, &t) in emb.report_times().iter().enumerate() {
            let (mean, se) = emb.mean_and_se(j);
            assert!((mean - 1.0).abs() < 3.5 * se, "t={t}: mean {mean} se {se}");
            let samples: Vec<f64> = emb.values_at(j).collect();
            let law = crate::laws::ExponentialBmLaw;
            let (d, _) = crate::verify::ks_test(&samples, |x| law.cdf(t, x)).unwrap();
            assert!(d < 0.08, "t={t}: KS {d}");
        }
        // nested domains: stopping steps never decrease across report times
        for i in 0..emb.n_paths() {
            assert!(emb.stop_step(i, 0) <= emb.stop_step(i, 1));
        }
    }

    #[test]
    fn jumps_survive_report_grid_refinement() {
        // A continuous martingale's max increment between report times
        // shrinks as the grid refines; the embedded process keeps jumping.
        // 0.08 is the frozen empirical lower bound on the fraction of
        // paths with an increment > 0.5 on the 4x-refined grid.
        let frac_with_jump = |times: Vec<f64>| {
            let emb = madan_yor_paths(&EmbedConfig {
                report_times: times,
                n_paths: 2000,
                bm_step: 1e-3,
                step_budget: 10_000_000,
                seed: 42,
            })
            .unwrap();
            let mut with_jump = 0usize;
            for i in 0..emb.n_paths() {
                let mut prev = 1.0; // start value
                for j in 0..emb.report_times().len() {
                    let v = emb.value(i, j);
                    if (v - prev).abs() > 0.5 {
                        with_jump += 1;
                        break;
                    }
                    prev = v;
                }
            }
            with_jump as f64 / emb.n_paths() as f64
        };

        let base: Vec<f64> = (1..=4).map(|i| i as f64 * 0.25).collect();
        let refined: Vec<f64> = (1..=16).map(|i| i as f64 / 16.0).collect();
        let f_base = frac_with_jump(base);
        let f_refined = frac_with_jump(refined);
        assert!(f_base > 0.08, "base grid jump fraction {f_base}");
        assert!(f_refined > 0.08, "refined grid jump fraction {f_refined}");
    }

    #[test]
    fn embedded_process_reports_budget_exhaustion() {
        let cfg = EmbedConfig {
            report_times: vec![1.0],
            n_paths: 64,
            bm_step: 1e-4,
            step_budget: 50,
            seed: 1,
        };
        let emb = madan_yor_paths(&cfg).unwrap();
        assert!(!emb.exhausted_paths().is_empty());
    }

    #[test]
    fn embedded_process_rejects_bad_config() {
        let bad_times = EmbedConfig { report_times: vec![0.5, 0.5], ..EmbedConfig::default() };
        assert!(madan_yor_paths(&bad_times).is_err());
        let no_times = EmbedConfig { report_times: vec![], ..EmbedConfig::default() };
        assert!(madan_yor_paths(&no_times).is_err());
        let bad_step = EmbedConfig { bm_step: 0.0, n_paths: 1, ..EmbedConfig::default() };
        assert!(madan_yor_paths(&bad_step).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn barycentre_dominates_state_and_mean(t in 0.05f64..4.0, x in 1e-3f64..50.0) {
            let b = barycentre_lognormal(t, x).unwrap();
            prop_assert!(b >= x);
            prop_assert!(b >= 1.0);
        }

        #[test]
        fn barycentre_nondecreasing_in_state(t in 0.05f64..4.0, x in 1e-2f64..20.0, dx in 1e-3f64..5.0) {
            let b0 = barycentre_lognormal(t, x).unwrap();
            let b1 = barycentre_lognormal(t, x + dx).unwrap();
            prop_assert!(b1 >= b0 - 1e-12);
        }
    }
}
