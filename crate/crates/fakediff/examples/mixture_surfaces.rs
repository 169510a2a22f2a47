//! The residual density h_t and the local volatility eta of a validated
//! construction, evaluated on a small grid.
//!
//! Shows the mixture identity c f_{a(t)} + (1-c) h_t = f_t holding to
//! machine precision and the ratio eta^2/sigma^2 pinned inside [1, L^2].
//!
//! ```bash
//! cargo run --release -p fakediff --example mixture_surfaces
//! ```

use fakediff::laws::{DiffusionLaw, Law};
use fakediff::mixture::{local_vol_eta, residual_density, validate_spec};
use fakediff::timechange::make_timechange_ebm;

fn main() -> fakediff::Result<()> {
    let spec = validate_spec(Law::ebm(), make_timechange_ebm(0.5)?, 0.25)?;
    println!(
        "validated: K = {}, c = {}, L^2 = {}",
        spec.ratio_bound(),
        spec.c(),
        spec.l_squared()
    );

    let law = spec.law();
    for t in [0.25, 1.0, 4.0] {
        println!("\nt = {t}");
        println!("{:>10} {:>12} {:>12} {:>12} {:>14}", "y", "f_t", "h_t", "eta", "identity err");
        let a = spec.clock().a(t);
        for z in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            let y = (z * t.sqrt()).exp();
            let f_t = law.density(t, y);
            let h = residual_density(&spec, t, y)?;
            let eta = local_vol_eta(&spec, t, y)?;
            let resid = (spec.c() * law.density(a, y) + (1.0 - spec.c()) * h - f_t) / f_t;
            println!("{y:>10.4} {f_t:>12.6} {h:>12.6} {eta:>12.6} {resid:>14.2e}");
        }
    }

    // eta stays inside [sigma, L sigma]: sample the bound at the edges
    let t = 1.0f64;
    let l = spec.l_squared().sqrt();
    for z in [-5.0, 0.0, 5.0] {
        let y = (z * t.sqrt()).exp();
        let ratio = local_vol_eta(&spec, t, y)? / law.sigma(y);
        println!("eta/sigma at z = {z:>4}: {ratio:.6}  (must lie in [1, {l:.4}])");
    }
    Ok(())
}
