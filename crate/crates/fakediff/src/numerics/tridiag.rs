//! Thomas algorithm for tridiagonal systems.

/// Solve a tridiagonal system in place. `lower` has length `n - 1` (row i,
/// column i-1), `diag` length `n`, `upper` length `n - 1` (row i, column
/// i+1); `rhs` is overwritten with the solution. The systems produced by the
/// theta-scheme are strictly diagonally dominant, so no pivoting is needed.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64], scratch: &mut Vec<f64>) {
    let n = diag.len();
    debug_assert_eq!(lower.len(), n - 1);
    debug_assert_eq!(upper.len(), n - 1);
    debug_assert_eq!(rhs.len(), n);

    scratch.clear();
    scratch.resize(n - 1, 0.0);

    scratch[0] = upper[0] / diag[0];
    rhs[0] /= diag[0];
    for i in 1..n {
        let den = diag[i] - lower[i - 1] * scratch[i - 1];
        if i < n - 1 {
            scratch[i] = upper[i] / den;
        }
        rhs[i] = (rhs[i] - lower[i - 1] * rhs[i - 1]) / den;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i] * rhs[i + 1];
    }
}
