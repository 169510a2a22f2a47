//! Acceptance suite: every criterion at its stated tolerance, one
//! PASS/FAIL line each (run with `--nocapture` to see them).
//!
//! The constructions under test: lognormal (K = 0.5, c = 0.25) and
//! (K = 0.9, c = 0.5), Gaussian (K = 0.5, c = 0.25), all with the
//! documented default seed 42.

use fakediff::laws::{audit_states, DiffusionLaw, Law};
use fakediff::mixture::{
    audit_times, convex_order_integrand, local_vol_eta, residual_density, validate_spec, FakeSpec,
    AUDIT_STATES, AUDIT_WIDTH_SD,
};
use fakediff::simulate::{PathGrid, RngConfig};
use fakediff::timechange::{make_timechange_bm, make_timechange_ebm, phi, psi};
use fakediff::verify::{
    convex_order_check, dupire_vs_closed_form_error, dupire_vs_quadrature_error,
    ks2_critical, ks2_statistic, ks_test, marginal_refinement_study, solve_dupire, DupireGrids,
};
use std::time::Instant;

const SEED: u64 = 42;

fn specs() -> Vec<FakeSpec> {
    vec![
        validate_spec(Law::ebm(), make_timechange_ebm(0.5).unwrap(), 0.25).unwrap(),
        validate_spec(Law::ebm(), make_timechange_ebm(0.9).unwrap(), 0.5).unwrap(),
        validate_spec(Law::bm(), make_timechange_bm(0.5).unwrap(), 0.25).unwrap(),
    ]
}

fn report(criterion: &str, pass: bool, detail: &str, started: Instant) {
    println!(
        "{} {criterion}: {detail}  [{:.2?}]",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed()
    );
    assert!(pass, "{criterion}: {detail}");
}

#[test]
fn criterion_1_mixture_identity() {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for spec in specs() {
        let law = spec.law();
        for &t in &audit_times() {
            let a = spec.clock().a(t);
            for y in audit_states(law, t, AUDIT_WIDTH_SD, AUDIT_STATES) {
                let f_t = law.density(t, y);
                let f_a = law.density(a, y);
                let h = residual_density(&spec, t, y).unwrap();
                worst = worst.max(((spec.c() * f_a + (1.0 - spec.c()) * h - f_t) / f_t).abs());
            }
        }
    }
    report(
        "criterion 1 (mixture identity)",
        worst < 1e-14,
        &format!("max relative error {worst:.3e} < 1e-14 on 64x201 grid, 3 specs"),
        started,
    );
}

#[test]
fn criterion_2_eta_bounds() {
    let started = Instant::now();
    let mut violations = 0usize;
    let mut x0_worst: f64 = 0.0;
    for spec in specs() {
        let law = spec.law();
        let (c, k, l2) = (spec.c(), spec.ratio_bound(), spec.l_squared());
        for &t in &audit_times() {
            let a = spec.clock().a(t);
            let ad = spec.clock().a_dot(t);
            for y in audit_states(law, t, AUDIT_WIDTH_SD, AUDIT_STATES) {
                // 1 <= eta^2/sigma^2 < f_t/(f_t - c f_a) <= L^2, the strict
                // middle gap evaluated as its positive closed form.
                let r = (law.log_density(a, y) - law.log_density(t, y)).exp();
                let denom = 1.0 - c * r;
                let excess_over_one = c * r * (1.0 - ad) / denom;
                let gap_to_mid = c * ad * r / denom;
                let mid = 1.0 / denom;
                if !(excess_over_one > 0.0) || !(gap_to_mid > 0.0) || mid > l2 * (1.0 + 1e-12) {
                    violations += 1;
                }
            }
            let eta = local_vol_eta(&spec, t, law.x0()).unwrap();
            let sig = law.sigma(law.x0());
            let want = (1.0 - c * ad / k) / (1.0 - c / k);
            x0_worst = x0_worst.max((eta * eta / (sig * sig) - want).abs());
        }
    }
    report(
        "criterion 2 (eta bounds)",
        violations == 0 && x0_worst < 1e-12,
        &format!("0 bound violations (got {violations}), closed form at x0 within {x0_worst:.3e}"),
        started,
    );
}

#[test]
fn criterion_3_clock_correctness() {
    let started = Instant::now();
    let k = 0.5;
    let tc = make_timechange_ebm(k).unwrap();
    let mut psi_worst: f64 = 0.0;
    let mut fd_worst: f64 = 0.0;
    let mut a_dot_max: f64 = 0.0;
    for i in 0..64 {
        let t = 1e-4 * (1e6_f64).powf(i as f64 / 63.0); // log grid over [1e-4, 1e2]
        let a = tc.a(t);
        let rhs = k * psi(t).unwrap();
        psi_worst = psi_worst.max((psi(a).unwrap() - rhs).abs() / rhs);
        let h = 1e-5 * t;
        let fd = (tc.a(t + h) - tc.a(t - h)) / (2.0 * h);
        let ad = tc.a_dot(t);
        fd_worst = fd_worst.max((ad - fd).abs());
        a_dot_max = a_dot_max.max(ad);
        assert!((ad - phi(t).unwrap() / phi(a).unwrap()).abs() < 1e-15);
    }
    let bm_k = 0.7f64;
    let bm = make_timechange_bm(bm_k).unwrap();
    let bm_exact = (0..64).all(|i| {
        let t = 0.1 * (i + 1) as f64;
        bm.a(t) == bm_k * bm_k * t && bm.a_dot(t) == bm_k * bm_k
    });
    report(
        "criterion 3 (clock correctness)",
        psi_worst < 1e-12 && fd_worst < 1e-6 && a_dot_max < 1.0 && bm_exact,
        &format!(
            "psi identity {psi_worst:.2e} < 1e-12, a' vs FD {fd_worst:.2e} < 1e-6, \
             max a' {a_dot_max:.4} < 1, linear clock exact: {bm_exact}"
        ),
        started,
    );
}

#[test]
fn criterion_4_convex_order() {
    let started = Instant::now();
    let spec = validate_spec(Law::ebm(), make_timechange_ebm(0.5).unwrap(), 0.25).unwrap();
    let r = convex_order_check(&spec, &audit_times(), AUDIT_STATES).unwrap();
    // integrand positivity for the other two specs (the call-price FD for
    // the default spec covers the quadrature route)
    let mut other_min = f64::INFINITY;
    for spec in &specs()[1..] {
        for &t in &audit_times() {
            for y in audit_states(spec.law(), t, AUDIT_WIDTH_SD, AUDIT_STATES) {
                other_min = other_min.min(convex_order_integrand(spec, t, y));
            }
        }
    }
    report(
        "criterion 4 (convex order)",
        r.integrand_min > 0.0 && r.fd_min > 0.0 && other_min > 0.0,
        &format!(
            "integrand min {:.2e} > 0 and call-price FD min {:.2e} > 0 at {} audit nodes",
            r.integrand_min.min(other_min),
            r.fd_min,
            r.nodes
        ),
        started,
    );
}

#[test]
fn criterion_5_law_of_h_two_routes() {
    let started = Instant::now();
    let spec = validate_spec(Law::ebm(), make_timechange_ebm(0.5).unwrap(), 0.25).unwrap();
    let grids = DupireGrids { n_space: 401, n_time: 400, store_every: 1 };
    let surface = solve_dupire(&spec, 1.0, &grids).unwrap();
    let err = dupire_vs_quadrature_error(&spec, &surface).unwrap();

    let degenerate = validate_spec(Law::ebm(), make_timechange_ebm(0.5).unwrap(), 1e-12).unwrap();
    let deg_surface = solve_dupire(&degenerate, 1.0, &grids).unwrap();
    let deg_err = dupire_vs_closed_form_error(&degenerate, &deg_surface);

    report(
        "criterion 5 (law of H by two routes)",
        err < 1e-3 && deg_err < 5e-4,
        &format!("PDE vs quadrature {err:.3e} < 1e-3; degenerate vs closed form {deg_err:.3e} < 5e-4"),
        started,
    );
}

#[test]
fn criteria_6_and_7_fake_marginals_and_qv_witness() {
    let started = Instant::now();
    let spec = validate_spec(Law::ebm(), make_timechange_ebm(0.5).unwrap(), 0.25).unwrap();
    let law = Law::ebm();
    let n_paths = 50_000;

    // -- criterion 6: marginals at the reference budget ---------------------
    let fake = fakediff::simulate::sample_fake(
        &spec,
        &PathGrid::new(1.0, 1000).unwrap(),
        n_paths,
        RngConfig::new(SEED),
    )
    .unwrap();
    let grid = fake.grid().clone();
    let mut ks_worst: f64 = 0.0;
    for t in [0.25, 0.5, 1.0] {
        let idx = grid.index_of(t).unwrap();
        let samples: Vec<f64> = fake.at_step(idx).collect();
        let (d, _) = ks_test(&samples, |x| law.cdf(t, x)).unwrap();
        ks_worst = ks_worst.max(d);
    }

    let mut z_max: f64 = 0.0;
    for idx in 1..=grid.n_steps() {
        let (mean, se) = fake.mean_and_se(idx);
        z_max = z_max.max((mean - 1.0).abs() / se);
    }

    // Coupled refinement: every step count is driven by the same fine-grid
    // Brownian increments, which isolates the scheme bias as far as a
    // KS-against-the-analytic-CDF statistic allows.
    let study = marginal_refinement_study(&spec, 1.0, 2000, &[8, 4, 2, 1], n_paths, SEED).unwrap();
    let decreasing = study.windows(2).all(|w| w[1].1 < w[0].1);
    let seq: Vec<String> = study.iter().map(|(n, d)| format!("{n}:{d:.5}")).collect();

    // The bias ladder itself (coupled two-sample distance to the finest
    // refinement): diagnostic context for the strict-decrease clause.
    let finest =
        fakediff::simulate::coupled_terminal_samples(&spec, 1.0, 2000, 1, n_paths, SEED).unwrap();
    let mut ladder = Vec::new();
    for factor in [8usize, 4, 2] {
        let coarse =
            fakediff::simulate::coupled_terminal_samples(&spec, 1.0, 2000, factor, n_paths, SEED)
                .unwrap();
        ladder.push(format!(
            "{}:{:.5}",
            2000 / factor,
            ks2_statistic(&coarse, &finest).unwrap()
        ));
    }

    let pass6 = ks_worst < 0.012 && decreasing && z_max < 3.0;
    let detail6 = format!(
        "KS max {ks_worst:.5} < 0.012; mean max |z| {z_max:.2} < 3; refinement KS {} strictly \
         decreasing: {decreasing} (coupled scheme-bias ladder vs finest: {})",
        seq.join(" -> "),
        ladder.join(" -> ")
    );
    println!(
        "{} criterion 6 (fake marginals by Monte Carlo): {detail6}  [{:.2?}]",
        if pass6 { "PASS" } else { "FAIL" },
        started.elapsed()
    );

    // -- criterion 7: quadratic-variation witness ---------------------------
    let started7 = Instant::now();
    let qv_fake = fakediff::simulate::realized_log_qv(&fake).unwrap();
    let exact = fakediff::simulate::sample_x_exact(
        &law,
        &PathGrid::new(1.0, 1000).unwrap(),
        n_paths,
        RngConfig::new(SEED + 1),
    )
    .unwrap();
    let qv_exact = fakediff::simulate::realized_log_qv(&exact).unwrap();
    let d = ks2_statistic(&qv_fake, &qv_exact).unwrap();
    let crit = ks2_critical(1e-6, qv_fake.len(), qv_exact.len());

    let cut = (spec.clock().a(1.0) + 1.0) / 2.0;
    let below = qv_fake.iter().filter(|&&q| q < cut).count() as f64 / n_paths as f64;
    let se = (spec.c() * (1.0 - spec.c()) / n_paths as f64).sqrt();
    let split_ok = (below - spec.c()).abs() < 3.0 * se;

    report(
        "criterion 7 (fakeness witness)",
        d > crit && split_ok,
        &format!(
            "two-sample QV KS {d:.4} rejects at alpha=1e-6 (critical {crit:.4}); \
             fraction below (a(T)+T)/2 = {below:.4} vs c = {} within 3 SE",
            spec.c()
        ),
        started7,
    );

    // The strict-decrease clause is asserted last so criterion 7 always
    // reports. At these budgets the scheme bias (~1.3e-3 at 250 steps,
    // decreasing cleanly in the coupled ladder above) sits below the
    // n = 5e4 KS sampling floor (~4e-3), so the literal statistic measures
    // the fixed noise realization rather than the bias; see the notes
    // accompanying the suite for the quantitative analysis.
    assert!(
        pass6,
        "criterion 6 (fake marginals by Monte Carlo): {detail6}"
    );
}

#[test]
fn criterion_8_madan_yor_embedding() {
    let started = Instant::now();
    let law = fakediff::laws::ExponentialBmLaw;

    // barycentre closed form vs quadrature
    let opts = fakediff::numerics::QuadratureOpts {
        rel_tol: 1e-11,
        abs_tol: 1e-280,
        max_evals: 1 << 22,
    };
    let mut bary_worst: f64 = 0.0;
    for t in [0.25f64, 1.0, 4.0] {
        for i in 0..9 {
            let x = 0.05 * (400.0f64).powf(i as f64 / 8.0); // log grid over [0.05, 20]
            let s = t.sqrt();
            let hi = (0.5 * t + (8.0 + s) * s).exp().max(x * ((9.0 + s) * s).exp());
            let num = fakediff::numerics::integrate(
                |u: f64| u.exp() * law.density(t, u.exp()) * u.exp(),
                x.ln(),
                hi.ln(),
                &opts,
            )
            .unwrap();
            let den = fakediff::numerics::integrate(
                |u: f64| law.density(t, u.exp()) * u.exp(),
                x.ln(),
                hi.ln(),
                &opts,
            )
            .unwrap();
            let closed = fakediff::embed::barycentre_lognormal(t, x).unwrap();
            bary_worst = bary_worst.max((closed - num / den).abs());
        }
    }

    // residual-mean-life order on the grid
    let ts: Vec<f64> = (0..24).map(|i| 0.1 * (40.0f64).powf(i as f64 / 23.0)).collect();
    let xs: Vec<f64> = (0..60).map(|i| 0.05 * (400.0f64).powf(i as f64 / 59.0)).collect();
    let mrl = fakediff::embed::check_mrl_order(&ts, &xs);

    // the embedding itself at the stated budget
    let emb = fakediff::embed::madan_yor_paths(&fakediff::embed::EmbedConfig {
        report_times: vec![0.25, 0.5, 1.0],
        n_paths: 50_000,
        bm_step: 1e-4,
        step_budget: 10_000_000,
        seed: SEED,
    })
    .unwrap();
    let mut ks_worst: f64 = 0.0;
    let mut z_worst: f64 = 0.0;
    for (j, &t) in emb.report_times().iter().enumerate() {
        let samples: Vec<f64> = emb.values_at(j).collect();
        let (d, _) = ks_test(&samples, |x| law.cdf(t, x)).unwrap();
        ks_worst = ks_worst.max(d);
        let (mean, se) = emb.mean_and_se(j);
        z_worst = z_worst.max((mean - 1.0).abs() / se);
    }

    report(
        "criterion 8 (Madan-Yor embedding)",
        bary_worst < 1e-8 && mrl.pass && ks_worst < 0.015 && z_worst < 3.0 && emb.exhausted_paths().is_empty(),
        &format!(
            "barycentre closed-vs-quadrature {bary_worst:.2e} < 1e-8; t-monotone: {}; \
             embedded KS max {ks_worst:.5} < 0.015; mean max |z| {z_worst:.2} < 3; \
             {} budget-exhausted paths",
            mrl.pass,
            emb.exhausted_paths().len()
        ),
        started,
    );
}

#[test]
fn criterion_9_determinism() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = |sub: &str| fakediff::cli::RunConfig {
        n_paths: 2000,
        n_steps: 200,
        out_dir: dir.path().join(sub),
        ..fakediff::cli::RunConfig::default()
    };

    let run = |sub: &str, threads: usize| {
        let cfg = cfg(sub);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| fakediff::cli::cmd_simulate(&cfg).unwrap());
        (
            std::fs::read(cfg.out_dir.join("paths.csv")).unwrap(),
            std::fs::read(cfg.out_dir.join("qv.csv")).unwrap(),
        )
    };

    let (paths_a, qv_a) = run("a", 1);
    let (paths_b, qv_b) = run("b", 4);
    let (paths_c, qv_c) = run("c", 2);
    let identical = paths_a == paths_b && paths_b == paths_c && qv_a == qv_b && qv_b == qv_c;

    // the embedded process obeys the same contract
    let emb1 = fakediff::embed::madan_yor_paths(&fakediff::embed::EmbedConfig {
        n_paths: 500,
        bm_step: 1e-3,
        ..fakediff::embed::EmbedConfig::default()
    })
    .unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let emb2 = pool.install(|| {
        fakediff::embed::madan_yor_paths(&fakediff::embed::EmbedConfig {
            n_paths: 500,
            bm_step: 1e-3,
            ..fakediff::embed::EmbedConfig::default()
        })
        .unwrap()
    });
    let emb_same = (0..emb1.n_paths()).all(|i| {
        (0..emb1.report_times().len()).all(|j| emb1.value(i, j) == emb2.value(i, j))
    });

    report(
        "criterion 9 (determinism)",
        identical && emb_same,
        &format!("byte-identical CSV across 1/2/4-thread pools: {identical}; embedded values identical: {emb_same}"),
        started,
    );
}
