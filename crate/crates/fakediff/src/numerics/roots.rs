//! Bracketed scalar root refinement: bisection with secant acceleration.

use crate::error::{Error, Result};

/// Find the root of `f` inside `[lo, hi]`, where `f(lo)` and `f(hi)` must
/// have opposite signs. Secant steps are taken when they fall safely inside
/// the bracket, otherwise the step falls back to bisection, so convergence
/// is guaranteed and usually superlinear. Terminates when the bracket width
/// drops below `rel_tol` relative to the current iterate.
pub fn solve_bracketed<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    rel_tol: f64,
) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::RootBracket(format!(
            "no sign change on [{lo}, {hi}]: f = ({fa}, {fb})"
        )));
    }

    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let scale = mid.abs().max(f64::MIN_POSITIVE);
        if (b - a).abs() <= rel_tol * scale {
            return Ok(mid);
        }

        // Secant candidate, clamped into the open bracket.
        let sec = b - fb * (b - a) / (fb - fa);
        let x = if sec > a + 0.25 * rel_tol * scale && sec < b - 0.25 * rel_tol * scale {
            sec
        } else {
            mid
        };
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_root() {
        let r = solve_bracketed(|x| x * x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2.0_f64.powf(1.0 / 3.0)).abs() < 1e-13);
    }

    #[test]
    fn rejects_unbracketed() {
        assert!(solve_bracketed(|x| x * x + 1.0, -1.0, 1.0, 1e-12).is_err());
    }

    #[test]
    fn endpoint_root() {
        let r = solve_bracketed(|x| x, 0.0, 1.0, 1e-12).unwrap();
        assert_eq!(r, 0.0);
    }
}
