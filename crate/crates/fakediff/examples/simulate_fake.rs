//! Simulate the fake process and watch it both match the lognormal
//! marginals and betray itself through its quadratic variation.
//!
//! ```bash
//! cargo run --release -p fakediff --example simulate_fake
//! ```

use fakediff::laws::{DiffusionLaw, Law};
use fakediff::mixture::validate_spec;
use fakediff::simulate::{realized_log_qv, sample_fake, sample_x_exact, Component, PathGrid, RngConfig};
use fakediff::timechange::make_timechange_ebm;
use fakediff::verify::{ks2_test, ks_test};

fn main() -> fakediff::Result<()> {
    let spec = validate_spec(Law::ebm(), make_timechange_ebm(0.5)?, 0.25)?;
    let law = Law::ebm();
    let grid = PathGrid::new(1.0, 500)?;
    let n_paths = 20_000;

    let fake = sample_fake(&spec, &grid, n_paths, RngConfig::new(42))?;
    let g_count = fake.components().iter().filter(|c| **c == Component::Slowed).count();
    println!("{n_paths} paths, {} slowed (G), {} residual (H)", g_count, n_paths - g_count);

    println!("\nmarginals of the fake process against the lognormal law:");
    for t in [0.25, 0.5, 1.0] {
        let idx = grid.index_of(t).expect("t on grid");
        let samples: Vec<f64> = fake.at_step(idx).collect();
        let (d, p) = ks_test(&samples, |x| law.cdf(t, x))?;
        let (mean, se) = fake.mean_and_se(idx);
        println!("  t = {t}: KS = {d:.5} (p = {p:.3}), mean = {mean:.5} +- {se:.5}");
    }

    println!("\nrealized log-QV separates the processes:");
    let exact = sample_x_exact(&law, &grid, n_paths, RngConfig::new(7))?;
    let qv_fake = realized_log_qv(&fake)?;
    let qv_exact = realized_log_qv(&exact)?;
    let mean_of = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!("  exact EBM   QV mean = {:.4}  (the time horizon)", mean_of(&qv_exact));
    let (g, h): (Vec<(f64, Component)>, Vec<(f64, Component)>) = qv_fake
        .iter()
        .copied()
        .zip(fake.components().iter().copied())
        .partition(|(_, c)| *c == Component::Slowed);
    let g: Vec<f64> = g.into_iter().map(|(q, _)| q).collect();
    let h: Vec<f64> = h.into_iter().map(|(q, _)| q).collect();
    println!("  fake G part QV mean = {:.4}  (the warped horizon a(T) = {:.4})", mean_of(&g), spec.clock().a(1.0));
    println!("  fake H part QV mean = {:.4}  (above the horizon: eta >= sigma)", mean_of(&h));
    let (d, p) = ks2_test(&qv_fake, &qv_exact)?;
    println!("  two-sample KS fake-vs-exact: D = {d:.4}, p = {p:.2e} -- same marginals, different process");
    Ok(())
}
