//! Tridiagonal and cyclic-tridiagonal solves shared by the forward and
//! backward steppers. Both schemes produce diagonally dominant systems, so
//! no pivoting is needed.

use crate::{Error, Result};

/// Thomas algorithm, in place; `sub[i]` multiplies `x[i-1]`, `sup[i]`
/// multiplies `x[i+1]` (`sub[0]` and `sup[n-1]` unused).
pub(crate) fn solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 {
        return Err(Error::SolverFailure("zero pivot in tridiagonal solve".into()));
    }
    c[0] = sup[0] / denom;
    rhs[0] /= denom;
    for i in 1..n {
        denom = diag[i] - sub[i] * c[i - 1];
        if denom == 0.0 {
            return Err(Error::SolverFailure(format!("zero pivot at row {i}")));
        }
        c[i] = sup[i] / denom;
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    Ok(())
}

/// Cyclic variant via the Sherman-Morrison correction; `corner_sub` is the
/// row-0 coupling to the last unknown, `corner_sup` the last row's coupling
/// to the first.
pub(crate) fn solve_cyclic(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    corner_sub: f64,
    corner_sup: f64,
    rhs: &mut [f64],
) -> Result<()> {
    let n = diag.len();
    let gamma = -diag[0];
    let mut diag_mod = diag.to_vec();
    diag_mod[0] -= gamma;
    diag_mod[n - 1] -= corner_sub * corner_sup / gamma;

    let mut y = rhs.to_vec();
    solve(sub, &diag_mod, sup, &mut y)?;

    let mut z = vec![0.0; n];
    z[0] = gamma;
    z[n - 1] = corner_sup;
    solve(sub, &diag_mod, sup, &mut z)?;

    // v = (1, 0, ..., corner_sub / gamma)
    let vy = y[0] + corner_sub / gamma * y[n - 1];
    let vz = z[0] + corner_sub / gamma * z[n - 1];
    let factor = vy / (1.0 + vz);
    if !factor.is_finite() {
        return Err(Error::SolverFailure("singular cyclic correction".into()));
    }
    for i in 0..n {
        rhs[i] = y[i] - factor * z[i];
    }
    Ok(())
}
