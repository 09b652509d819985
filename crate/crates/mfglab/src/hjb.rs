//! Backward solver for the value equation of the linear-drift mean field
//! game,
//!
//! ```text
//! d p/dt + a(t,x) d²p/dx² + H(t, x, f0(t,x) dp/dx) = eta(t,x),
//! p(T, x) = -eta0(x),
//! ```
//!
//! with `eta` a subgradient selection from `G_r(., rho)` and `eta0` from
//! `G0_r(., rho(T))`. Diffusion is treated implicitly, the (globally
//! Lipschitz) Hamiltonian explicitly at the lagged gradient, so each
//! backward step is one tridiagonal solve. The second derivative is the
//! plain Laplacian scaled by `a` (non-divergence form); walls are closed by
//! a zero second difference, i.e. linear extrapolation of the value.

use crate::convexcost::{ConvexCostSpec, TerminalCostSpec};
use crate::fp::{CoefficientField, DensityField};
use crate::grid::{gradient, Boundary, Field, Grid, TimeGrid, TrajectoryField};
use crate::hamiltonian::{hamiltonian_value, ControlBall, LagrangianSpec};
use crate::{Error, Result};

/// Value trajectory with its terminal condition `p(T) = -eta0`.
#[derive(Debug, Clone)]
pub struct ValueField {
    traj: TrajectoryField,
    terminal: Field,
}

impl ValueField {
    pub fn traj(&self) -> &TrajectoryField {
        &self.traj
    }

    pub fn frame(&self, n: usize) -> &Field {
        self.traj.frame(n)
    }

    pub fn n_frames(&self) -> usize {
        self.traj.n_frames()
    }

    pub fn terminal(&self) -> &Field {
        &self.terminal
    }

    /// Rebuilds a value field from a stored trajectory (the last frame is
    /// the terminal condition).
    pub fn from_traj(traj: TrajectoryField) -> Self {
        let terminal = traj.last().clone();
        Self { traj, terminal }
    }
}

/// Output of [`hjb_solve`]: the value field, the source selections actually
/// used, and the recorded CFL ratio of the explicit Hamiltonian term.
#[derive(Debug, Clone)]
pub struct HjbOutput {
    pub p: ValueField,
    pub eta: TrajectoryField,
    pub eta0: Field,
    /// `dt * a_ball * max|f0| / dx`; the explicit term's stability
    /// certificate wants this at most one.
    pub cfl_ratio: f64,
}

/// Terminal condition `-G0_r(x_i, rho_T(x_i))` nodewise.
pub fn hjb_terminal(g0: &TerminalCostSpec, rho_t: &Field, g: &Grid) -> Result<Field> {
    if rho_t.len() != g.n_cells() {
        return Err(Error::DimensionMismatch { expected: g.n_cells(), got: rho_t.len() });
    }
    if let Some(i) = rho_t.values().iter().position(|v| *v < 0.0) {
        return Err(Error::NegativeDensity { index: i, value: rho_t.get(i) });
    }
    let values = g
        .centers()
        .enumerate()
        .map(|(i, x)| -g0.subgradient(x, rho_t.get(i)))
        .collect::<Vec<_>>();
    let out = Field::new(values);
    if !out.all_finite() {
        return Err(Error::NonFinite { context: "hjb terminal condition" });
    }
    Ok(out)
}

/// One backward step from `t_n + dt` to `t_n`: solves
/// `(I - dt a d²) p_n = p_next + dt [ H(f0 grad p_next) - eta_n ]`.
pub fn hjb_step_backward(
    p_next: &Field,
    eta_n: &Field,
    coef: &CoefficientField,
    l: &LagrangianSpec,
    ball: &ControlBall,
    t_n: f64,
    dt: f64,
    g: &Grid,
) -> Result<Field> {
    let n = g.n_cells();
    if p_next.len() != n || eta_n.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: p_next.len().max(eta_n.len()) });
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("need dt > 0, got {dt}"),
        });
    }

    let grad_p = gradient(p_next, g)?;
    let mut rhs = Vec::with_capacity(n);
    for (i, x) in g.centers().enumerate() {
        let q = coef.drift_gain(t_n, x) * grad_p.get(i);
        let h = hamiltonian_value(l, ball, t_n, x, q)?.value;
        rhs.push(p_next.get(i) + dt * (h - eta_n.get(i)));
    }

    let dx = g.dx();
    let mut sub = vec![0.0; n];
    let mut diag = vec![1.0; n];
    let mut sup = vec![0.0; n];
    let periodic = g.boundary() == Boundary::Periodic;
    let (mut corner_sub, mut corner_sup) = (0.0, 0.0);
    for (i, x) in g.centers().enumerate() {
        let a = coef.diffusion(t_n, x);
        if !a.is_finite() || a < coef.gamma_lower() * (1.0 - 1e-12) {
            return Err(Error::Ellipticity { t: t_n, x, value: a, gamma: coef.gamma_lower() });
        }
        let c = dt * a / (dx * dx);
        let interior = i > 0 && i + 1 < n;
        if interior {
            sub[i] = -c;
            diag[i] = 1.0 + 2.0 * c;
            sup[i] = -c;
        } else if periodic {
            diag[i] = 1.0 + 2.0 * c;
            if i == 0 {
                corner_sub = -c;
                sup[i] = -c;
            } else {
                sub[i] = -c;
                corner_sup = -c;
            }
        }
        // Wall rows stay identity: zero second difference.
    }

    let mut p = rhs;
    if periodic {
        crate::tridiag::solve_cyclic(&sub, &diag, &sup, corner_sub, corner_sup, &mut p)?;
    } else {
        crate::tridiag::solve(&sub, &diag, &sup, &mut p)?;
    }
    let out = Field::new(p);
    if !out.all_finite() {
        return Err(Error::NonFinite { context: "hjb_step_backward output" });
    }
    Ok(out)
}

/// Solves the full backward sweep given a density trajectory: the terminal
/// condition comes from `G0_r(rho(T))`, the running source from
/// `G_r(t_n, ., rho(t_n, .))` nodewise.
pub fn hjb_solve(
    rho: &DensityField,
    g_cost: &ConvexCostSpec,
    g0_cost: &TerminalCostSpec,
    coef: &CoefficientField,
    l: &LagrangianSpec,
    ball: &ControlBall,
    tg: &TimeGrid,
    g: &Grid,
) -> Result<HjbOutput> {
    let n_steps = tg.n_steps();
    if rho.n_frames() != n_steps + 1 {
        return Err(Error::DimensionMismatch { expected: n_steps + 1, got: rho.n_frames() });
    }

    let mut eta_frames = Vec::with_capacity(n_steps + 1);
    for n in 0..=n_steps {
        let t = tg.node(n);
        let frame = rho.frame(n);
        let vals = g
            .centers()
            .enumerate()
            .map(|(i, x)| g_cost.subgradient(t, x, frame.get(i)))
            .collect::<Vec<_>>();
        let f = Field::new(vals);
        if !f.all_finite() {
            return Err(Error::NonFinite { context: "running source eta" });
        }
        eta_frames.push(f);
    }
    let eta = TrajectoryField::new(eta_frames);

    let eta0 = Field::new(
        g.centers()
            .enumerate()
            .map(|(i, x)| g0_cost.subgradient(x, rho.frame(n_steps).get(i)))
            .collect(),
    );
    let terminal = hjb_terminal(g0_cost, rho.frame(n_steps), g)?;

    let mut frames = vec![Field::zeros(0); n_steps + 1];
    frames[n_steps] = terminal.clone();
    for n in (0..n_steps).rev() {
        let next = frames[n + 1].clone();
        frames[n] = hjb_step_backward(&next, eta.frame(n), coef, l, ball, tg.node(n), tg.dt(), g)?;
    }

    let mut f0_max = 0.0f64;
    for n in 0..=n_steps {
        let t = tg.node(n);
        for x in g.centers() {
            f0_max = f0_max.max(coef.drift_gain(t, x).abs());
        }
    }
    let cfl_ratio = if tg.dt() > 0.0 { tg.dt() * ball.radius() * f0_max / g.dx() } else { 0.0 };
    if cfl_ratio > 1.0 {
        log::warn!(
            "explicit Hamiltonian CFL ratio {cfl_ratio:.3} exceeds 1; \
             dt <= dx / (a_ball max|f0|) restores the certificate"
        );
    }

    Ok(HjbOutput {
        p: ValueField { traj: TrajectoryField::new(frames), terminal },
        eta,
        eta0,
        cfl_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fp::{fp_solve, gaussian_field};

    fn setup(n: usize) -> (Grid, ControlBall, LagrangianSpec) {
        (
            Grid::new(-3.0, 3.0, n, Boundary::NoFlux).unwrap(),
            ControlBall::new(1.0).unwrap(),
            LagrangianSpec::quadratic(0.5, 256),
        )
    }

    #[test]
    fn terminal_condition_reference_cases() {
        let (g, _, _) = setup(16);
        let rho_t = Field::constant(16, 0.3);

        let zero = TerminalCostSpec::zero();
        let t = hjb_terminal(&zero, &rho_t, &g).unwrap();
        assert!(t.values().iter().all(|v| *v == 0.0));

        let quad = TerminalCostSpec::quadratic(0.5); // G0 = r^2/2, G0_r = r
        let t = hjb_terminal(&quad, &rho_t, &g).unwrap();
        assert!(t.values().iter().all(|v| (*v + 0.3).abs() < 1e-15));

        let lin = TerminalCostSpec::linear(2.0);
        let t = hjb_terminal(&lin, &rho_t, &g).unwrap();
        assert!(t.values().iter().all(|v| (*v + 2.0).abs() < 1e-15));
    }

    #[test]
    fn constant_source_gives_exact_linear_in_time_value() {
        // eta = 0.5, p(T) = -1, H(0) = 0: p(t) = -1 - (T - t) * 0.5.
        let (g, ball, l) = setup(32);
        let coef = CoefficientField::constant(0.2, 0.2, 1.0).unwrap();
        let n_steps = 20;
        let dt = 1.0 / n_steps as f64;
        let eta = Field::constant(32, 0.5);
        let mut p = Field::constant(32, -1.0);
        for n in (0..n_steps).rev() {
            p = hjb_step_backward(&p, &eta, &coef, &l, &ball, n as f64 * dt, dt, &g).unwrap();
        }
        for i in 0..32 {
            assert!((p.get(i) + 1.5).abs() < 1e-12, "p = {}", p.get(i));
        }
    }

    #[test]
    fn single_step_matches_hand_recomputation() {
        // L = 0 on a ball of radius 1 gives H(q) = |q|; check the whole step
        // against a by-hand assembly of the same linear system.
        let g = Grid::new(0.0, 1.0, 8, Boundary::NoFlux).unwrap();
        let ball = ControlBall::new(1.0).unwrap();
        let l = LagrangianSpec::zero(512);
        let coef = CoefficientField::constant(0.05, 0.05, 1.0).unwrap();
        let p_next = Field::from_fn(&g, |x| x * x);
        let eta = Field::constant(8, 0.2);
        let dt = 0.01;
        let p = hjb_step_backward(&p_next, &eta, &coef, &l, &ball, 0.0, dt, &g).unwrap();

        let dx = g.dx();
        let grad = gradient(&p_next, &g).unwrap();
        let rhs: Vec<f64> =
            (0..8).map(|i| p_next.get(i) + dt * (grad.get(i).abs() - 0.2)).collect();
        let c = dt * 0.05 / (dx * dx);
        let mut sub = vec![0.0; 8];
        let mut diag = vec![1.0; 8];
        let mut sup = vec![0.0; 8];
        for i in 1..7 {
            sub[i] = -c;
            diag[i] = 1.0 + 2.0 * c;
            sup[i] = -c;
        }
        let mut want = rhs;
        crate::tridiag::solve(&sub, &diag, &sup, &mut want).unwrap();
        for i in 0..8 {
            assert!((p.get(i) - want[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn backward_heat_matches_forward_heat_in_reversed_time() {
        // H = 0 (degenerate ball), eta = 0: the backward sweep is forward
        // diffusion in reversed time; for constant `a` on a periodic grid
        // the two discrete operators coincide exactly.
        let g = Grid::new(-3.0, 3.0, 128, Boundary::Periodic).unwrap();
        let tg = TimeGrid::new(0.5, 50).unwrap();
        let coef = CoefficientField::constant(0.1, 0.1, 0.0).unwrap();
        let ball = ControlBall::new(1e-30).unwrap();
        let l = LagrangianSpec::zero(8);

        let bump = gaussian_field(&g, 0.0, 0.05);
        let zero_drift = TrajectoryField::constant_in_time(Field::zeros(128), 50);
        let forward = fp_solve(&bump, &zero_drift, &coef, &tg, &g).unwrap();

        let eta = Field::zeros(128);
        let mut p = bump.clone();
        let mut backward_frames = vec![p.clone()];
        for n in (0..50).rev() {
            p = hjb_step_backward(&p, &eta, &coef, &l, &ball, tg.node(n), tg.dt(), &g).unwrap();
            backward_frames.push(p.clone());
        }
        for k in 0..=50 {
            let fwd = forward.frame(k);
            let bwd = &backward_frames[k];
            let max_dev = fwd
                .values()
                .iter()
                .zip(bwd.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(max_dev <= 1e-12, "k = {k}, dev = {max_dev}");
        }
    }

    #[test]
    fn spatially_constant_inputs_stay_spatially_constant() {
        let (g, ball, l) = setup(24);
        let coef = CoefficientField::constant(0.3, 0.3, 1.0).unwrap();
        let eta = Field::constant(24, -0.7);
        let mut p = Field::constant(24, 2.0);
        for n in (0..10).rev() {
            p = hjb_step_backward(&p, &eta, &coef, &l, &ball, n as f64 * 0.02, 0.02, &g).unwrap();
            let first = p.get(0);
            assert!(p.values().iter().all(|v| (*v - first).abs() < 1e-13));
        }
    }

    #[test]
    fn implicit_diffusion_step_is_monotone() {
        let (g, ball, l) = setup(40);
        let coef = CoefficientField::constant(0.2, 0.2, 1.0).unwrap();
        let eta = Field::zeros(40);
        let p_lo = Field::from_fn(&g, |x| (x * 1.3).sin());
        let p_hi = Field::new(p_lo.values().iter().map(|v| v + 0.25).collect());
        let lo = hjb_step_backward(&p_lo, &eta, &coef, &l, &ball, 0.0, 0.01, &g).unwrap();
        let hi = hjb_step_backward(&p_hi, &eta, &coef, &l, &ball, 0.0, 0.01, &g).unwrap();
        for i in 0..40 {
            assert!(lo.get(i) <= hi.get(i) + 1e-13);
        }
    }

    #[test]
    fn decoupled_solve_is_constant_in_space_and_linear_in_time() {
        // G_r = alpha, G0_r = c0: p(t) = -c0 - (T - t) alpha.
        let (g, ball, l) = setup(64);
        let coef = CoefficientField::constant(0.1, 0.1, 1.0).unwrap();
        let tg = TimeGrid::new(1.0, 40).unwrap();
        let g_cost = ConvexCostSpec::linear(0.5);
        let g0_cost = TerminalCostSpec::linear(2.0);

        let rho0 = crate::fp::normalized_gaussian(&g, 0.0, 0.04).unwrap();
        let drift = TrajectoryField::constant_in_time(Field::zeros(64), 40);
        let rho = fp_solve(&rho0, &drift, &coef, &tg, &g).unwrap();

        let out = hjb_solve(&rho, &g_cost, &g0_cost, &coef, &l, &ball, &tg, &g).unwrap();
        for n in 0..=40 {
            let want = -2.0 - (1.0 - tg.node(n)) * 0.5;
            for i in 0..64 {
                assert!(
                    (out.p.frame(n).get(i) - want).abs() < 1e-12,
                    "n = {n}, i = {i}: {} vs {want}",
                    out.p.frame(n).get(i)
                );
            }
        }
        assert_eq!(out.p.terminal().get(0), -2.0);
        assert!(out.cfl_ratio > 0.0);
    }

    #[test]
    fn zero_costs_give_identically_zero_value() {
        let (g, ball, l) = setup(32);
        let coef = CoefficientField::constant(0.1, 0.1, 1.0).unwrap();
        let tg = TimeGrid::new(1.0, 20).unwrap();
        let rho0 = crate::fp::normalized_gaussian(&g, 0.0, 0.04).unwrap();
        let drift = TrajectoryField::constant_in_time(Field::zeros(32), 20);
        let rho = fp_solve(&rho0, &drift, &coef, &tg, &g).unwrap();
        let out = hjb_solve(
            &rho,
            &ConvexCostSpec::zero(),
            &TerminalCostSpec::zero(),
            &coef,
            &l,
            &ball,
            &tg,
            &g,
        )
        .unwrap();
        for n in 0..=20 {
            assert!(out.p.frame(n).values().iter().all(|v| *v == 0.0));
        }
    }
}
