//! The whole verification battery at a reduced Monte Carlo budget,
//! printed as pass/fail lines and serialized to JSON.
//!
//! ```bash
//! cargo run --release -p fakediff --example full_report
//! ```

use fakediff::laws::Law;
use fakediff::mixture::validate_spec;
use fakediff::timechange::make_timechange_ebm;
use fakediff::verify::{full_verification, DupireGrids, VerifyConfig};

fn main() -> fakediff::Result<()> {
    let spec = validate_spec(Law::ebm(), make_timechange_ebm(0.5)?, 0.25)?;
    let cfg = VerifyConfig {
        n_paths: 10_000,
        n_steps: 200,
        // wider bias allowance to go with the coarser scheme
        ks_bias_allowance: 0.012,
        pde: DupireGrids { n_space: 201, n_time: 200, store_every: 1 },
        pde_tolerance: 2e-3,
        pde_degenerate_tolerance: 2e-3,
        ..VerifyConfig::default()
    };
    let report = full_verification(&spec, &cfg)?;
    for c in &report.checks {
        println!(
            "{} {:<42} statistic {:>12.5e}  threshold {:>12.5e}",
            if c.pass { "PASS" } else { "FAIL" },
            c.check,
            c.statistic,
            c.threshold
        );
    }
    println!("\nall passed: {}", report.all_passed());
    println!("\nreport.json:\n{}", report.to_json());
    Ok(())
}
