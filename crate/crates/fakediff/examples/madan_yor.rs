//! The discontinuous fake process: Brownian motion stopped on nested
//! barycentre domains.
//!
//! Run at a reduced budget so it finishes in seconds; the acceptance
//! suite exercises the full 50k-path, 1e-4-step configuration.
//!
//! ```bash
//! cargo run --release -p fakediff --example madan_yor
//! ```

use fakediff::embed::{barycentre_lognormal, check_mrl_order, madan_yor_paths, EmbedConfig};
use fakediff::laws::{DiffusionLaw, ExponentialBmLaw};
use fakediff::numerics::log_spaced;
use fakediff::verify::ks_test;

fn main() -> fakediff::Result<()> {
    println!("barycentre b_t(x) = E[P_t | P_t >= x] of the lognormal marginal:");
    println!("{:>8} {:>12} {:>12} {:>12}", "x", "b_0.25(x)", "b_1(x)", "b_4(x)");
    for x in [0.25, 0.5, 1.0, 2.0, 4.0] {
        println!(
            "{x:>8} {:>12.5} {:>12.5} {:>12.5}",
            barycentre_lognormal(0.25, x)?,
            barycentre_lognormal(1.0, x)?,
            barycentre_lognormal(4.0, x)?,
        );
    }

    let mrl = check_mrl_order(&log_spaced(0.1, 4.0, 24), &log_spaced(0.05, 20.0, 60));
    println!(
        "\nbarycentres non-decreasing in t on the grid: {} (worst increment {:.3e})",
        if mrl.pass { "yes" } else { "NO" },
        mrl.worst_diff
    );

    let cfg = EmbedConfig {
        report_times: vec![0.25, 0.5, 1.0],
        n_paths: 4000,
        bm_step: 5e-4,
        step_budget: 10_000_000,
        seed: 42,
    };
    println!("\nstopping {} Brownian paths (step {})...", cfg.n_paths, cfg.bm_step);
    let emb = madan_yor_paths(&cfg)?;
    let law = ExponentialBmLaw;
    for (j, &t) in emb.report_times().iter().enumerate() {
        let samples: Vec<f64> = emb.values_at(j).collect();
        let (d, _) = ks_test(&samples, |x| law.cdf(t, x))?;
        let (mean, se) = emb.mean_and_se(j);
        println!("  t = {t}: KS vs lognormal = {d:.4}, mean = {mean:.4} +- {se:.4}");
    }
    println!("budget-exhausted paths: {}", emb.exhausted_paths().len());

    // The process jumps: large increments between report times persist.
    let mut big = 0usize;
    for i in 0..emb.n_paths() {
        for j in 1..emb.report_times().len() {
            if (emb.value(i, j) - emb.value(i, j - 1)).abs() > 0.5 {
                big += 1;
                break;
            }
        }
    }
    println!(
        "paths with a jump larger than 0.5 between report times: {:.1}%",
        100.0 * big as f64 / emb.n_paths() as f64
    );
    Ok(())
}
