//! Adaptive composite Simpson quadrature with Richardson extrapolation.
//!
//! Integrands in this crate are smooth on the interval handed in (payoff
//! kinks are split at the kink by the caller), so Simpson subdivision with
//! the |S2 - S1|/15 error estimate converges quickly. Tolerances are spent
//! proportionally to interval length, which bounds the accumulated error by
//! the requested budget.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct QuadratureOpts {
    /// Relative tolerance on the value of the integral.
    pub rel_tol: f64,
    /// Absolute floor, so near-zero integrals terminate.
    pub abs_tol: f64,
    /// Budget on integrand evaluations before giving up.
    pub max_evals: usize,
}

impl Default for QuadratureOpts {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-15,
            max_evals: 1 << 20,
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    simpson: f64,
    tol: f64,
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

/// Integrate `f` over `[a, b]` (sign-aware if `a > b`).
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, opts: &QuadratureOpts) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return integrate(f, b, a, opts).map(|v| -v);
    }

    let mut evals = 0usize;
    let mut eval = |x: f64, evals: &mut usize| {
        *evals += 1;
        f(x)
    };

    // Coarse pre-pass fixes the scale used by the relative tolerance.
    let n0 = 32usize;
    let h = (b - a) / n0 as f64;
    let mut nodes = Vec::with_capacity(n0 + 1);
    for i in 0..=n0 {
        nodes.push(eval(a + h * i as f64, &mut evals));
    }
    let mut rough = 0.0;
    for i in (0..n0).step_by(2) {
        rough += h / 3.0 * (nodes[i] + 4.0 * nodes[i + 1] + nodes[i + 2]);
    }

    let mut eps = opts.abs_tol.max(opts.rel_tol * rough.abs());
    for _attempt in 0..3 {
        let mut total = 0.0;
        let mut stack: Vec<Segment> = Vec::with_capacity(64);
        // Seed with the pre-pass panels so the first refinement level is free.
        for i in (0..n0).step_by(2) {
            let (xa, xb) = (a + h * i as f64, a + h * (i + 2) as f64);
            let (fa, fm, fb) = (nodes[i], nodes[i + 1], nodes[i + 2]);
            stack.push(Segment {
                a: xa,
                b: xb,
                fa,
                fm,
                fb,
                simpson: simpson(xa, xb, fa, fm, fb),
                tol: eps * (xb - xa) / (b - a),
            });
        }

        while let Some(seg) = stack.pop() {
            if evals > opts.max_evals {
                return Err(Error::QuadratureNonconvergence(format!(
                    "evaluation budget {} exhausted on [{a}, {b}]",
                    opts.max_evals
                )));
            }
            let m = 0.5 * (seg.a + seg.b);
            let ml = 0.5 * (seg.a + m);
            let mr = 0.5 * (m + seg.b);
            let fml = eval(ml, &mut evals);
            let fmr = eval(mr, &mut evals);
            let s_left = simpson(seg.a, m, seg.fa, fml, seg.fm);
            let s_right = simpson(m, seg.b, seg.fm, fmr, seg.fb);
            let err = s_left + s_right - seg.simpson;
            // Subdivision below floating-point resolution: accept as is.
            let exhausted = ml <= seg.a || mr >= seg.b;
            if err.abs() <= 15.0 * seg.tol || exhausted {
                total += s_left + s_right + err / 15.0;
            } else {
                stack.push(Segment {
                    a: seg.a,
                    b: m,
                    fa: seg.fa,
                    fm: fml,
                    fb: seg.fm,
                    simpson: s_left,
                    tol: 0.5 * seg.tol,
                });
                stack.push(Segment {
                    a: m,
                    b: seg.b,
                    fa: seg.fm,
                    fm: fmr,
                    fb: seg.fb,
                    simpson: s_right,
                    tol: 0.5 * seg.tol,
                });
            }
        }

        // Pre-pass scale can be off for peaked integrands; tighten and redo.
        let wanted = opts.abs_tol.max(opts.rel_tol * total.abs());
        if wanted >= eps || total == 0.0 {
            return Ok(total);
        }
        eps = wanted;
    }

    Err(Error::QuadratureNonconvergence(format!(
        "tolerance did not stabilise on [{a}, {b}]"
    )))
}
