//! Seeded Monte Carlo engine for the reference process `X`, the slowed
//! copy `G_t = X_{a(t)}`, the residual local-volatility diffusion `H` and
//! the Bernoulli mixture that fakes the reference marginals.
//!
//! # Reproducibility contract
//!
//! Every path derives its noise from a dedicated ChaCha substream keyed by
//! `(seed, path id, domain)`; the component labels come from one further
//! dedicated substream. Paths are processed in fixed-size batches writing
//! to disjoint output regions, so a given `(seed, grid, spec, n_paths)`
//! produces bit-identical ensembles regardless of how many threads rayon
//! schedules.
//!
//! # Schemes
//!
//! `X` and `G` use the exact transition law (Gaussian increments on the
//! appropriate clock; no discretization error in law). `H` has no closed
//! transition law and is stepped explicitly with the local volatility
//! frozen at the left endpoint: log-Euler on positive state spaces, which
//! keeps paths positive, plain Euler on the real line. The first step
//! evaluates the volatility at the first positive grid time, where it is
//! well defined and bounded inside `[sigma, L sigma]`.

use crate::error::{Error, Result};
use crate::laws::{DiffusionLaw, Law, Support};
use crate::mixture::{eta_sq_over_sigma_sq, FakeSpec};
use crate::timechange::TimeChange;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Paths per work batch; fixed so results do not depend on thread count.
const BATCH: usize = 512;

/// Log-state guard for positive laws; exceeding it aborts the run.
const LN_GUARD: f64 = 50.0;

/// Uniform time grid `0 = t_0 < t_1 < ... < t_n = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGrid {
    horizon: f64,
    n_steps: usize,
}

impl PathGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || n_steps == 0 {
            return Err(Error::Domain(format!(
                "path grid needs horizon > 0 and at least one step, got T = {horizon}, n = {n_steps}"
            )));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn t(&self, i: usize) -> f64 {
        self.horizon * i as f64 / self.n_steps as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(|i| self.t(i))
    }

    /// Index of a grid time, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.horizon * self.n_steps as f64;
        let i = x.round() as usize;
        (i <= self.n_steps && (x - i as f64).abs() < 1e-9).then_some(i)
    }
}

/// Which of the mixture's constituents a path follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    /// The slowed copy `G_t = X_{a(t)}`.
    Slowed,
    /// The residual local-volatility diffusion `H`.
    Residual,
    /// The reference process itself.
    Exact,
}

impl Component {
    pub fn label(&self) -> &'static str {
        match self {
            Component::Slowed => "G",
            Component::Residual => "H",
            Component::Exact => "X-exact",
        }
    }
}

/// Stepping scheme recorded on an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Exact,
    LogEuler,
    Euler,
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::Exact => "exact",
            Scheme::LogEuler => "log-euler",
            Scheme::Euler => "euler",
        }
    }
}

/// Seed wrapper; the substream discipline lives in this module.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngConfig {
    pub seed: u64,
}

impl RngConfig {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

mod domain {
    pub const PATH_NOISE: u64 = 0;
    pub const COMPONENT_LABEL: u64 = 1;
    pub const EMBED: u64 = 2;
}

/// Independent ChaCha stream for `(seed, stream index, domain)`.
pub(crate) fn substream(seed: u64, stream: u64, dom: u64) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    key[16..24].copy_from_slice(&dom.to_le_bytes());
    ChaCha12Rng::from_seed(key)
}

pub(crate) fn embed_substream(seed: u64, path_id: u64) -> ChaCha12Rng {
    substream(seed, path_id, domain::EMBED)
}

/// Seeded Monte Carlo paths on a grid, with per-path component labels.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    grid: PathGrid,
    n_paths: usize,
    /// Row-major: path `i` occupies `values[i*(n+1) .. (i+1)*(n+1)]`.
    values: Vec<f64>,
    component: Vec<Component>,
    seed: u64,
    scheme: Scheme,
}

impl PathEnsemble {
    pub fn grid(&self) -> &PathGrid {
        &self.grid
    }
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }
    pub fn path(&self, i: usize) -> &[f64] {
        let w = self.grid.n_steps + 1;
        &self.values[i * w..(i + 1) * w]
    }
    pub fn component(&self, i: usize) -> Component {
        self.component[i]
    }
    pub fn components(&self) -> &[Component] {
        &self.component
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Values of every path at grid index `step`.
    pub fn at_step(&self, step: usize) -> impl Iterator<Item = f64> + '_ {
        let w = self.grid.n_steps + 1;
        (0..self.n_paths).map(move |i| self.values[i * w + step])
    }

    /// Sample mean and standard error at a grid index.
    pub fn mean_and_se(&self, step: usize) -> (f64, f64) {
        let n = self.n_paths as f64;
        let (mut s, mut s2) = (0.0, 0.0);
        for v in self.at_step(step) {
            s += v;
            s2 += v * v;
        }
        let mean = s / n;
        let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
        (mean, (var / n).sqrt())
    }
}

/// Warped-time tables on the fine grid, shared by every path of a run.
pub(crate) struct ClockTable {
    t: Vec<f64>,
    a: Vec<f64>,
    a_dot: Vec<f64>,
}

impl ClockTable {
    fn identity(horizon: f64, n_fine: usize) -> Self {
        let t: Vec<f64> = (0..=n_fine)
            .map(|i| horizon * i as f64 / n_fine as f64)
            .collect();
        Self { a: t.clone(), a_dot: vec![1.0; n_fine + 1], t }
    }

    fn warped(tc: &TimeChange, horizon: f64, n_fine: usize) -> Self {
        let t: Vec<f64> = (0..=n_fine)
            .map(|i| horizon * i as f64 / n_fine as f64)
            .collect();
        let a = t.iter().map(|&ti| tc.a(ti)).collect();
        let a_dot = t.iter().map(|&ti| tc.a_dot(ti)).collect();
        Self { t, a, a_dot }
    }
}

#[derive(Clone, Copy)]
enum Dynamics {
    /// Exact transitions of the reference law on the table's `a` clock.
    ExactWarped,
    /// Explicit stepping of the residual diffusion.
    Residual { c: f64, eta_scale: f64 },
}

struct Kernel<'a> {
    law: &'a Law,
    dynamics: Dynamics,
    clock: &'a ClockTable,
    /// Coarse step = `factor` fine steps; noise is built from fine
    /// increments so refinements of the same seed share a Brownian path.
    factor: usize,
    real_line_guard: f64,
}

impl Kernel<'_> {
    fn n_coarse(&self) -> usize {
        (self.clock.t.len() - 1) / self.factor
    }

    /// Simulate one path into `out` (length `n_coarse + 1`).
    fn run(&self, path_id: usize, rng: &mut ChaCha12Rng, out: &mut [f64]) -> Result<()> {
        let positive = self.law.support() == Support::PositiveHalfLine;
        let x0 = self.law.x0();
        out[0] = x0;
        // Positive laws are stepped in logs.
        let mut state = if positive { x0.ln() } else { x0 };

        for i in 0..self.n_coarse() {
            let base = i * self.factor;
            match self.dynamics {
                Dynamics::ExactWarped => {
                    let mut dw = 0.0;
                    for j in 0..self.factor {
                        let dv = self.clock.a[base + j + 1] - self.clock.a[base + j];
                        let z: f64 = rng.sample(StandardNormal);
                        dw += dv.sqrt() * z;
                    }
                    let dv_total = self.clock.a[base + self.factor] - self.clock.a[base];
                    if positive {
                        state += dw - 0.5 * dv_total;
                    } else {
                        state += dw;
                    }
                }
                Dynamics::Residual { c, eta_scale } => {
                    let mut dw = 0.0;
                    for j in 0..self.factor {
                        let dt = self.clock.t[base + j + 1] - self.clock.t[base + j];
                        let z: f64 = rng.sample(StandardNormal);
                        dw += dt.sqrt() * z;
                    }
                    let dt_total = self.clock.t[base + self.factor] - self.clock.t[base];
                    // Volatility frozen at the left endpoint; the first step
                    // uses the first positive coarse time instead of t = 0.
                    let e = if i == 0 { self.factor } else { base };
                    let y = if positive { state.exp() } else { state };
                    let ratio = eta_sq_over_sigma_sq(
                        self.law,
                        c,
                        self.clock.t[e],
                        self.clock.a[e],
                        self.clock.a_dot[e],
                        y,
                    ) * eta_scale
                        * eta_scale;
                    if positive {
                        // d ln H = -eta_bar^2/2 dt + eta_bar dW, eta_bar = eta/H.
                        state += -0.5 * ratio * dt_total + ratio.sqrt() * dw;
                    } else {
                        state += ratio.sqrt() * dw;
                    }
                }
            }
            let blown = if positive {
                state.abs() > LN_GUARD
            } else {
                state.abs() > self.real_line_guard
            };
            if blown {
                return Err(Error::PathExplosion {
                    path_id,
                    step: i + 1,
                    bound: if positive { LN_GUARD } else { self.real_line_guard },
                });
            }
            out[i + 1] = if positive { state.exp() } else { state };
        }
        Ok(())
    }
}

fn real_line_guard(horizon: f64) -> f64 {
    50.0 * (1.0 + horizon.sqrt())
}

/// Draw the per-path component labels from the dedicated substream.
fn draw_labels(seed: u64, c: f64, n_paths: usize) -> Vec<Component> {
    let mut rng = substream(seed, 0, domain::COMPONENT_LABEL);
    (0..n_paths)
        .map(|_| {
            if rng.random::<f64>() < c {
                Component::Slowed
            } else {
                Component::Residual
            }
        })
        .collect()
}

fn fill_ensemble(
    law: &Law,
    grid: &PathGrid,
    n_paths: usize,
    seed: u64,
    scheme: Scheme,
    component: Vec<Component>,
    kernel_for: impl Fn(Component) -> Dynamics + Sync,
    clock_exact: &ClockTable,
    clock_resid: &ClockTable,
) -> Result<PathEnsemble> {
    let w = grid.n_steps + 1;
    let mut values = vec![0.0f64; n_paths * w];
    let guard = real_line_guard(grid.horizon);

    values
        .par_chunks_mut(BATCH * w)
        .enumerate()
        .try_for_each(|(batch, chunk)| -> Result<()> {
            let base = batch * BATCH;
            for (j, out) in chunk.chunks_mut(w).enumerate() {
                let path_id = base + j;
                let comp = component[path_id];
                let dynamics = kernel_for(comp);
                let clock = match dynamics {
                    Dynamics::ExactWarped => clock_exact,
                    Dynamics::Residual { .. } => clock_resid,
                };
                let kernel = Kernel {
                    law,
                    dynamics,
                    clock,
                    factor: 1,
                    real_line_guard: guard,
                };
                let mut rng = substream(seed, path_id as u64, domain::PATH_NOISE);
                kernel.run(path_id, &mut rng, out)?;
            }
            Ok(())
        })?;

    Ok(PathEnsemble {
        grid: grid.clone(),
        n_paths,
        values,
        component,
        seed,
        scheme,
    })
}

/// Exact-in-law paths of the reference process.
pub fn sample_x_exact(law: &Law, grid: &PathGrid, n_paths: usize, rng: RngConfig) -> Result<PathEnsemble> {
    let clock = ClockTable::identity(grid.horizon, grid.n_steps);
    fill_ensemble(
        law,
        grid,
        n_paths,
        rng.seed,
        Scheme::Exact,
        vec![Component::Exact; n_paths],
        |_| Dynamics::ExactWarped,
        &clock,
        &clock,
    )
}

/// The slowed copy `G_t = X_{a(t)}`: exact X-transitions on the warped grid.
pub fn sample_g(spec: &FakeSpec, grid: &PathGrid, n_paths: usize, rng: RngConfig) -> Result<PathEnsemble> {
    let clock = ClockTable::warped(spec.clock(), grid.horizon, grid.n_steps);
    fill_ensemble(
        spec.law(),
        grid,
        n_paths,
        rng.seed,
        Scheme::Exact,
        vec![Component::Slowed; n_paths],
        |_| Dynamics::ExactWarped,
        &clock,
        &clock,
    )
}

fn residual_scheme(law: &Law) -> Scheme {
    match law.support() {
        Support::PositiveHalfLine => Scheme::LogEuler,
        Support::RealLine => Scheme::Euler,
    }
}

/// The residual diffusion `H`, stepped explicitly.
pub fn sample_h(spec: &FakeSpec, grid: &PathGrid, n_paths: usize, rng: RngConfig) -> Result<PathEnsemble> {
    let clock = ClockTable::warped(spec.clock(), grid.horizon, grid.n_steps);
    fill_ensemble(
        spec.law(),
        grid,
        n_paths,
        rng.seed,
        residual_scheme(spec.law()),
        vec![Component::Residual; n_paths],
        |_| Dynamics::Residual { c: spec.c(), eta_scale: 1.0 },
        &clock,
        &clock,
    )
}

/// The fake process: per path, a component label drawn once at time zero
/// (`G` with probability `c`, else `H`), then that component's dynamics.
pub fn sample_fake(spec: &FakeSpec, grid: &PathGrid, n_paths: usize, rng: RngConfig) -> Result<PathEnsemble> {
    let clock = ClockTable::warped(spec.clock(), grid.horizon, grid.n_steps);
    let labels = draw_labels(rng.seed, spec.c(), n_paths);
    let c = spec.c();
    fill_ensemble(
        spec.law(),
        grid,
        n_paths,
        rng.seed,
        residual_scheme(spec.law()),
        labels,
        move |comp| match comp {
            Component::Slowed => Dynamics::ExactWarped,
            _ => Dynamics::Residual { c, eta_scale: 1.0 },
        },
        &clock,
        &clock,
    )
}

/// Realized quadratic variation of the log path,
/// `sum_i (ln v_{i+1} - ln v_i)^2`, per path.
pub fn realized_log_qv(ensemble: &PathEnsemble) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(ensemble.n_paths);
    for i in 0..ensemble.n_paths {
        let path = ensemble.path(i);
        let mut qv = 0.0;
        if path[0] <= 0.0 {
            return Err(Error::Domain(format!("nonpositive value in path {i}")));
        }
        let mut prev_ln = path[0].ln();
        for &v in &path[1..] {
            if v <= 0.0 {
                return Err(Error::Domain(format!("nonpositive value in path {i}")));
            }
            let ln_v = v.ln();
            let d = ln_v - prev_ln;
            qv += d * d;
            prev_ln = ln_v;
        }
        out.push(qv);
    }
    Ok(out)
}

/// What a streaming scan simulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum EnsembleKind {
    Exact,
    Fake,
}

/// Terminal fake-ensemble samples at a given refinement factor; test-only
/// access to the coupled-refinement kernel.
#[doc(hidden)]
pub fn coupled_terminal_samples(
    spec: &FakeSpec,
    horizon: f64,
    n_fine: usize,
    factor: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let s = scan(&ScanCfg {
        spec,
        kind: EnsembleKind::Fake,
        horizon,
        n_fine,
        factor,
        n_paths,
        seed,
        eta_scale: 1.0,
        check_times: vec![horizon],
    })?;
    Ok(s.samples.into_iter().next().unwrap())
}

/// Streaming per-path statistics, so verification never materialises the
/// full `n_paths x (n_steps + 1)` matrix.
pub(crate) struct McScan {
    /// Coarse grid times.
    pub times: Vec<f64>,
    /// Sample mean per coarse time.
    pub mean: Vec<f64>,
    /// Standard error of the mean per coarse time.
    pub se: Vec<f64>,
    /// Check times and the per-path terminal-style samples at each.
    pub check_times: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
    /// Realized log-QV per path (positive laws only).
    pub log_qv: Option<Vec<f64>>,
    /// Component labels (fake scans only).
    pub labels: Option<Vec<Component>>,
}

pub(crate) struct ScanCfg<'a> {
    pub spec: &'a FakeSpec,
    pub kind: EnsembleKind,
    pub horizon: f64,
    /// Fine grid resolution carrying the Brownian increments.
    pub n_fine: usize,
    /// Coarse step = `factor` fine steps; the scheme runs on the coarse grid.
    pub factor: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub eta_scale: f64,
    pub check_times: Vec<f64>,
}

struct BatchStats {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    samples: Vec<Vec<f64>>,
    qv: Vec<f64>,
}

pub(crate) fn scan(cfg: &ScanCfg) -> Result<McScan> {
    if cfg.n_fine % cfg.factor != 0 {
        return Err(Error::Config(format!(
            "refinement factor {} must divide the fine step count {}",
            cfg.factor, cfg.n_fine
        )));
    }
    let n_coarse = cfg.n_fine / cfg.factor;
    let coarse_grid = PathGrid::new(cfg.horizon, n_coarse)?;
    let times: Vec<f64> = coarse_grid.times().collect();

    let check_idx: Vec<usize> = cfg
        .check_times
        .iter()
        .map(|&ct| {
            coarse_grid.index_of(ct).ok_or_else(|| {
                Error::Config(format!("check time {ct} is not on the coarse grid"))
            })
        })
        .collect::<Result<_>>()?;

    let law = cfg.spec.law();
    let positive = law.support() == Support::PositiveHalfLine;
    let clock_warp = ClockTable::warped(cfg.spec.clock(), cfg.horizon, cfg.n_fine);
    let clock_id = ClockTable::identity(cfg.horizon, cfg.n_fine);
    let guard = real_line_guard(cfg.horizon);
    let labels = match cfg.kind {
        EnsembleKind::Fake => Some(draw_labels(cfg.seed, cfg.spec.c(), cfg.n_paths)),
        EnsembleKind::Exact => None,
    };

    let n_batches = cfg.n_paths.div_ceil(BATCH);
    let batch_out: Vec<BatchStats> = (0..n_batches)
        .into_par_iter()
        .map(|batch| -> Result<BatchStats> {
            let lo = batch * BATCH;
            let hi = ((batch + 1) * BATCH).min(cfg.n_paths);
            let mut acc = BatchStats {
                sum: vec![0.0; n_coarse + 1],
                sum_sq: vec![0.0; n_coarse + 1],
                samples: vec![Vec::with_capacity(hi - lo); check_idx.len()],
                qv: Vec::with_capacity(if positive { hi - lo } else { 0 }),
            };
            let mut buf = vec![0.0f64; n_coarse + 1];
            for path_id in lo..hi {
                let dynamics = match (cfg.kind, labels.as_ref().map(|l| l[path_id])) {
                    (EnsembleKind::Exact, _) | (_, Some(Component::Slowed)) => Dynamics::ExactWarped,
                    _ => Dynamics::Residual { c: cfg.spec.c(), eta_scale: cfg.eta_scale },
                };
                let clock = match (cfg.kind, dynamics) {
                    (EnsembleKind::Exact, _) => &clock_id,
                    (_, Dynamics::ExactWarped) => &clock_warp,
                    (_, Dynamics::Residual { .. }) => &clock_warp,
                };
                let kernel = Kernel {
                    law,
                    dynamics,
                    clock,
                    factor: cfg.factor,
                    real_line_guard: guard,
                };
                let mut rng = substream(cfg.seed, path_id as u64, domain::PATH_NOISE);
                kernel.run(path_id, &mut rng, &mut buf)?;

                for (i, &v) in buf.iter().enumerate() {
                    acc.sum[i] += v;
                    acc.sum_sq[i] += v * v;
                }
                for (slot, &ci) in acc.samples.iter_mut().zip(&check_idx) {
                    slot.push(buf[ci]);
                }
                if positive {
                    let mut qv = 0.0;
                    let mut prev_ln = buf[0].ln();
                    for &v in &buf[1..] {
                        let ln_v = v.ln();
                        qv += (ln_v - prev_ln) * (ln_v - prev_ln);
                        prev_ln = ln_v;
                    }
                    acc.qv.push(qv);
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    // Merge in batch order: deterministic regardless of thread schedule.
    let n = cfg.n_paths as f64;
    let mut sum = vec![0.0; n_coarse + 1];
    let mut sum_sq = vec![0.0; n_coarse + 1];
    let mut samples = vec![Vec::with_capacity(cfg.n_paths); check_idx.len()];
    let mut qv = Vec::with_capacity(if positive { cfg.n_paths } else { 0 });
    for b in batch_out {
        for i in 0..=n_coarse {
            sum[i] += b.sum[i];
            sum_sq[i] += b.sum_sq[i];
        }
        for (dst, src) in samples.iter_mut().zip(b.samples) {
            dst.extend(src);
        }
        qv.extend(b.qv);
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let se: Vec<f64> = sum_sq
        .iter()
        .zip(&mean)
        .map(|(s2, m)| (((s2 - n * m * m) / (n - 1.0)).max(0.0) / n).sqrt())
        .collect();

    Ok(McScan {
        times,
        mean,
        se,
        check_times: cfg.check_times.clone(),
        samples,
        log_qv: positive.then_some(qv),
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::validate_spec;
    use crate::timechange::make_timechange_ebm;

    fn spec_default() -> FakeSpec {
        validate_spec(Law::ebm(), make_timechange_ebm(0.5).unwrap(), 0.25).unwrap()
    }

    #[test]
    fn grid_basics() {
        let g = PathGrid::new(2.0, 4).unwrap();
        assert_eq!(g.t(0), 0.0);
        assert_eq!(g.t(4), 2.0);
        assert_eq!(g.index_of(1.0), Some(2));
        assert_eq!(g.index_of(0.7), None);
        assert!(PathGrid::new(0.0, 4).is_err());
        assert!(PathGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn paths_start_at_x0_and_stay_positive() {
        let spec = spec_default();
        let grid = PathGrid::new(1.0, 16).unwrap();
        let ens = sample_fake(&spec, &grid, 64, RngConfig::new(7)).unwrap();
        for i in 0..ens.n_paths() {
            let p = ens.path(i);
            assert_eq!(p[0], 1.0);
            assert!(p.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn identical_seed_is_bit_identical_across_thread_counts() {
        let spec = spec_default();
        let grid = PathGrid::new(1.0, 100).unwrap();
        let run = || sample_fake(&spec, &grid, 700, RngConfig::new(42)).unwrap();

        let reference = run();
        for threads in [1usize, 4] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            let ens = pool.install(run);
            assert_eq!(ens.values(), reference.values(), "threads = {threads}");
            assert_eq!(ens.components(), reference.components());
        }
    }

    #[test]
    fn exact_ebm_terminal_moments() {
        let law = Law::ebm();
        let grid = PathGrid::new(1.0, 1).unwrap();
        let ens = sample_x_exact(&law, &grid, 50_000, RngConfig::new(42)).unwrap();
        let (mean, se) = ens.mean_and_se(1);
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean} se {se}");

        let n = ens.n_paths() as f64;
        let (mut s, mut s2) = (0.0, 0.0);
        for v in ens.at_step(1) {
            s += v * v;
            s2 += v * v * v * v;
        }
        let m2 = s / n;
        let se2 = (((s2 - n * m2 * m2) / (n - 1.0)).max(0.0) / n).sqrt();
        let want = 1.0f64.exp();
        assert!((m2 - want).abs() < 3.0 * se2, "second moment {m2} vs {want}");
    }

    #[test]
    fn exact_scheme_has_no_discretization_error_in_law() {
        let law = Law::ebm();
        let coarse = sample_x_exact(&law, &PathGrid::new(1.0, 1).unwrap(), 20_000, RngConfig::new(1)).unwrap();
        let fine = sample_x_exact(&law, &PathGrid::new(1.0, 251).unwrap(), 20_000, RngConfig::new(2)).unwrap();
        let a: Vec<f64> = coarse.at_step(1).collect();
        let b: Vec<f64> = fine.at_step(251).collect();
        let d = crate::verify::ks2_statistic(&a, &b).unwrap();
        // asymptotic two-sample critical value at alpha = 0.01
        let crit = 1.6276 * (2.0 / 20_000.0f64).sqrt();
        assert!(d < crit, "two-sample KS {d} >= {crit}");
    }

    #[test]
    fn slowed_terminal_matches_warped_law() {
        let spec = spec_default();
        let grid = PathGrid::new(1.0, 50).unwrap();
        let ens = sample_g(&spec, &grid, 20_000, RngConfig::new(9)).unwrap();
        let a1 = spec.clock().a(1.0);
        let n = ens.n_paths() as f64;
        let (mut s, mut s2) = (0.0, 0.0);
        for v in ens.at_step(50) {
            s += v * v;
            s2 += v * v * v * v;
        }
        let m2 = s / n;
        let se2 = (((s2 - n * m2 * m2) / (n - 1.0)).max(0.0) / n).sqrt();
        assert!((m2 - a1.exp()).abs() < 3.0 * se2, "{m2} vs {}", a1.exp());
        let (mean, se) = ens.mean_and_se(50);
        assert!((mean - 1.0).abs() < 3.0 * se);
    }

    #[test]
    fn slowed_with_k_near_one_is_indistinguishable_from_exact() {
        let spec = validate_spec(
            Law::ebm(),
            make_timechange_ebm(1.0 - 1e-9).unwrap(),
            0.25,
        )
        .unwrap();
        let grid = PathGrid::new(1.0, 20).unwrap();
        let g = sample_g(&spec, &grid, 10_000, RngConfig::new(3)).unwrap();
        let x = sample_x_exact(&Law::ebm(), &grid, 10_000, RngConfig::new(4)).unwrap();
        let a: Vec<f64> = g.at_step(20).collect();
        let b: Vec<f64> = x.at_step(20).collect();
        let d = crate::verify::ks2_statistic(&a, &b).unwrap();
        let crit = 1.6276 * (2.0 / 10_000.0f64).sqrt();
        assert!(d < crit, "{d} vs {crit}");
    }

    #[test]
    fn residual_is_a_martingale_and_matches_its_marginal() {
        let spec = spec_default();
        let grid = PathGrid::new(1.0, 500).unwrap();
        let ens = sample_h(&spec, &grid, 20_000, RngConfig::new(11)).unwrap();
        let (mean, se) = ens.mean_and_se(500);
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean} se {se}");

        let residual = crate::mixture::ResidualLaw::new(&spec);
        let samples: Vec<f64> = ens.at_step(500).collect();
        let (d, _) = crate::verify::ks_test(&samples, |x| residual.cdf(1.0, x)).unwrap();
        // 0.0115 statistical floor at this n plus discretization allowance
        assert!(d < 0.016, "KS {d}");
    }

    #[test]
    fn residual_with_vanishing_c_recovers_the_exact_law() {
        let spec = validate_spec(Law::ebm(), make_timechange_ebm(0.5).unwrap(), 1e-12).unwrap();
        let grid = PathGrid::new(1.0, 100).unwrap();
        let ens = sample_h(&spec, &grid, 10_000, RngConfig::new(5)).unwrap();
        let samples: Vec<f64> = ens.at_step(100).collect();
        let law = Law::ebm();
        let (d, _) = crate::verify::ks_test(&samples, |x| law.cdf(1.0, x)).unwrap();
        let crit = 1.6276 / (10_000.0f64).sqrt();
        assert!(d < crit, "KS {d} vs {crit}");
    }

    #[test]
    fn fake_label_fraction_is_binomial() {
        let spec = spec_default();
        let grid = PathGrid::new(1.0, 8).unwrap();
        let n = 20_000;
        let ens = sample_fake(&spec, &grid, n, RngConfig::new(42)).unwrap();
        let g_count = ens
            .components()
            .iter()
            .filter(|c| **c == Component::Slowed)
            .count() as f64;
        let frac = g_count / n as f64;
        let tol = 3.0 * (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((frac - 0.25).abs() < tol, "fraction {frac}");
    }

    #[test]
    fn fake_marginals_match_reference_law() {
        let spec = spec_default();
        let grid = PathGrid::new(1.0, 200).unwrap();
        let ens = sample_fake(&spec, &grid, 10_000, RngConfig::new(42)).unwrap();
        let law = Law::ebm();
        for t in [0.25, 0.5, 1.0] {
            let idx = grid.index_of(t).unwrap();
            let samples: Vec<f64> = ens.at_step(idx).collect();
            let (d, _) = crate::verify::ks_test(&samples, |x| law.cdf(t, x)).unwrap();
            assert!(d < 0.02, "t = {t}: KS {d}");
            let (mean, se) = ens.mean_and_se(idx);
            assert!((mean - 1.0).abs() < 3.0 * se, "t = {t}: mean {mean}");
        }
    }

    #[test]
    fn qv_of_exact_paths_concentrates_at_t() {
        let law = Law::ebm();
        let grid = PathGrid::new(1.0, 2000).unwrap();
        let ens = sample_x_exact(&law, &grid, 2000, RngConfig::new(6)).unwrap();
        let qv = realized_log_qv(&ens).unwrap();
        let mean = qv.iter().sum::<f64>() / qv.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean log-QV {mean}");
    }

    #[test]
    fn qv_of_slowed_paths_concentrates_at_warped_time() {
        let spec = spec_default();
        let grid = PathGrid::new(1.0, 2000).unwrap();
        let ens = sample_g(&spec, &grid, 2000, RngConfig::new(6)).unwrap();
        let qv = realized_log_qv(&ens).unwrap();
        let mean = qv.iter().sum::<f64>() / qv.len() as f64;
        let a1 = spec.clock().a(1.0);
        assert!((mean - a1).abs() < 0.02 * a1.max(1.0), "mean log-QV {mean} vs {a1}");
    }

    #[test]
    fn qv_separates_fake_components() {
        let spec = spec_default();
        let grid = PathGrid::new(1.0, 500).unwrap();
        let n = 10_000;
        let ens = sample_fake(&spec, &grid, n, RngConfig::new(42)).unwrap();
        let qv = realized_log_qv(&ens).unwrap();
        let cut = (spec.clock().a(1.0) + 1.0) / 2.0;
        let below = qv.iter().filter(|&&q| q < cut).count() as f64 / n as f64;
        let tol = 3.0 * (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((below - 0.25).abs() < tol, "fraction below cut: {below}");
        // and the split matches the labels exactly
        for (q, comp) in qv.iter().zip(ens.components()) {
            match comp {
                Component::Slowed => assert!(*q < cut),
                _ => assert!(*q >= cut),
            }
        }
    }

    #[test]
    fn qv_rejects_nonpositive_values() {
        let law = Law::bm();
        let grid = PathGrid::new(1.0, 32).unwrap();
        let ens = sample_x_exact(&law, &grid, 128, RngConfig::new(1)).unwrap();
        assert!(realized_log_qv(&ens).is_err());
    }

    #[test]
    fn scan_agrees_with_materialized_ensemble() {
        let spec = spec_default();
        let grid = PathGrid::new(1.0, 100).unwrap();
        let n = 600;
        let ens = sample_fake(&spec, &grid, n, RngConfig::new(42)).unwrap();
        let scan_out = scan(&ScanCfg {
            spec: &spec,
            kind: EnsembleKind::Fake,
            horizon: 1.0,
            n_fine: 100,
            factor: 1,
            n_paths: n,
            seed: 42,
            eta_scale: 1.0,
            check_times: vec![0.5, 1.0],
        })
        .unwrap();

        let terminal: Vec<f64> = ens.at_step(100).collect();
        assert_eq!(scan_out.samples[1], terminal);
        let (mean, se) = ens.mean_and_se(100);
        assert!((scan_out.mean[100] - mean).abs() < 1e-12);
        assert!((scan_out.se[100] - se).abs() < 1e-12);
        assert_eq!(scan_out.log_qv.as_ref().unwrap().len(), n);
        assert_eq!(scan_out.labels.as_ref().unwrap(), ens.components());
        let qv = realized_log_qv(&ens).unwrap();
        for (a, b) in qv.iter().zip(scan_out.log_qv.as_ref().unwrap()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn coupled_refinement_shares_the_brownian_path() {
        // factor > 1 must aggregate the same fine increments: the exact
        // component's terminal value is then identical because the exact
        // scheme only sees summed warped increments.
        let spec = spec_default();
        let base = ScanCfg {
            spec: &spec,
            kind: EnsembleKind::Exact,
            horizon: 1.0,
            n_fine: 64,
            factor: 1,
            n_paths: 50,
            seed: 10,
            eta_scale: 1.0,
            check_times: vec![1.0],
        };
        let fine = scan(&base).unwrap();
        let coarse = scan(&ScanCfg { factor: 8, ..base }).unwrap();
        for (a, b) in fine.samples[0].iter().zip(&coarse.samples[0]) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}
