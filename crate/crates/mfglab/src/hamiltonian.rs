//! Running cost `L` on the control ball `U0 = {|v| <= a}`, its convex
//! conjugate (the Hamiltonian) `H(t,x,q) = sup_{|v|<=a} { q v - L(t,x,v) }`,
//! and feedback-control extraction from a value field.
//!
//! `L` is only assumed convex and lower semicontinuous in the control, so the
//! sup is taken over a uniform grid of `2K + 1` points on `[-a, a]`; for a
//! convex `L` the grid sup underestimates the true sup by at most
//! `(|q| + Lip(L)) * a / K`. When convexity is declared, one golden-section
//! pass on the bracketing interval restores near-machine accuracy.

use crate::fp::CoefficientField;
use crate::grid::{gradient, Grid, TimeGrid, TrajectoryField};
use crate::{Error, Result};

/// Admissible control set `{ v : |v| <= radius }`.
#[derive(Debug, Clone, Copy)]
pub struct ControlBall {
    radius: f64,
}

impl ControlBall {
    pub fn new(radius: f64) -> Result<Self> {
        if !radius.is_finite() || radius <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "ball_radius",
                reason: format!("need finite radius > 0, got {radius}"),
            });
        }
        Ok(Self { radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// Running cost `L(t, x, u)` evaluated for `|u| <= a`.
pub struct LagrangianSpec {
    eval: Box<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>,
    resolution: usize,
    convexity_declared: bool,
}

impl LagrangianSpec {
    /// `resolution` is the number of grid points per half-ball (`K`); the
    /// discrete sup runs over `2K + 1` controls.
    pub fn new(
        eval: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        resolution: usize,
        convexity_declared: bool,
    ) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::InvalidParameter {
                name: "control_resolution",
                reason: "need at least one point per half-ball".into(),
            });
        }
        Ok(Self { eval: Box::new(eval), resolution, convexity_declared })
    }

    /// `L(u) = weight * u^2`.
    pub fn quadratic(weight: f64, resolution: usize) -> Self {
        Self {
            eval: Box::new(move |_t, _x, u| weight * u * u),
            resolution,
            convexity_declared: true,
        }
    }

    /// `L = 0` on the ball.
    pub fn zero(resolution: usize) -> Self {
        Self { eval: Box::new(|_, _, _| 0.0), resolution, convexity_declared: true }
    }

    pub fn eval(&self, t: f64, x: f64, u: f64) -> f64 {
        (self.eval)(t, x, u)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn convexity_declared(&self) -> bool {
        self.convexity_declared
    }
}

/// Value of the Hamiltonian at one `(t, x, q)` together with the selected
/// element of the (possibly multivalued) argmax set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianEval {
    pub value: f64,
    pub maximizer_u: f64,
}

/// Discrete sup over the control grid, no refinement.
///
/// Tie-break among grid maximizers: smallest `|v|`, then smaller `v`. The
/// argmax set of the exact problem is multivalued wherever `H` has a kink;
/// any measurable selection is admissible, this one is deterministic.
fn discrete_sup(
    l: &LagrangianSpec,
    ball: &ControlBall,
    t: f64,
    x: f64,
    q: f64,
) -> Result<HamiltonianEval> {
    let a = ball.radius();
    let k = l.resolution;
    let step = a / k as f64;
    let mut best_v = f64::NAN;
    let mut best_g = f64::NEG_INFINITY;
    for j in 0..=(2 * k) {
        // Pin the midpoint and right endpoint so 0 and +a are hit exactly.
        let v = if j == k {
            0.0
        } else if j == 2 * k {
            a
        } else {
            -a + j as f64 * step
        };
        let lv = l.eval(t, x, v);
        if !lv.is_finite() {
            return Err(Error::LagrangianEvaluation { t, x, u: v });
        }
        let g = q * v - lv;
        let better = g > best_g
            || (g == best_g
                && (v.abs() < best_v.abs() || (v.abs() == best_v.abs() && v < best_v)));
        if better {
            best_g = g;
            best_v = v;
        }
    }
    Ok(HamiltonianEval { value: best_g, maximizer_u: best_v })
}

/// Golden-section maximization of `v -> q v - L(v)` on `[lo, hi]`.
fn golden_refine(
    l: &LagrangianSpec,
    t: f64,
    x: f64,
    q: f64,
    lo: f64,
    hi: f64,
) -> Result<(f64, f64)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let objective = |v: f64| -> Result<f64> {
        let lv = l.eval(t, x, v);
        if !lv.is_finite() {
            return Err(Error::LagrangianEvaluation { t, x, u: v });
        }
        Ok(q * v - lv)
    };
    let mut a = lo;
    let mut b = hi;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = objective(c)?;
    let mut fd = objective(d)?;
    for _ in 0..64 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = objective(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = objective(d)?;
        }
    }
    let v = 0.5 * (a + b);
    Ok((v, objective(v)?))
}

/// `H(t, x, q)` with its selected maximizer.
pub fn hamiltonian_value(
    l: &LagrangianSpec,
    ball: &ControlBall,
    t: f64,
    x: f64,
    q: f64,
) -> Result<HamiltonianEval> {
    let coarse = discrete_sup(l, ball, t, x, q)?;
    if !l.convexity_declared {
        return Ok(coarse);
    }
    let a = ball.radius();
    let step = a / l.resolution as f64;
    let lo = (coarse.maximizer_u - step).max(-a);
    let hi = (coarse.maximizer_u + step).min(a);
    let (v, g) = golden_refine(l, t, x, q, lo, hi)?;
    // Keep the tie-broken grid point unless refinement strictly improves.
    if g > coarse.value {
        Ok(HamiltonianEval { value: g, maximizer_u: v })
    } else {
        Ok(coarse)
    }
}

/// Checks `|H(q1) - H(q2)| <= a |q1 - q2|` on the shared discrete sup set.
///
/// Both sups run over the same control grid, so the certificate holds by
/// construction; it is exposed as a runtime check of the implementation.
pub fn lipschitz_certificate(
    l: &LagrangianSpec,
    ball: &ControlBall,
    q1: f64,
    q2: f64,
    t: f64,
    x: f64,
) -> Result<bool> {
    let h1 = discrete_sup(l, ball, t, x, q1)?;
    let h2 = discrete_sup(l, ball, t, x, q2)?;
    Ok((h1.value - h2.value).abs() <= ball.radius() * (q1 - q2).abs())
}

/// Feedback extraction: `u(t_n, x_i) = argmax_{|v|<=a} { f0(t_n, x_i) v dp/dx - L }`.
///
/// Every output entry lies in `[-a, a]` by construction.
pub fn extract_control(
    p_traj: &TrajectoryField,
    coef: &CoefficientField,
    l: &LagrangianSpec,
    ball: &ControlBall,
    g: &Grid,
    tg: &TimeGrid,
) -> Result<TrajectoryField> {
    if p_traj.n_frames() != tg.n_steps() + 1 {
        return Err(Error::DimensionMismatch {
            expected: tg.n_steps() + 1,
            got: p_traj.n_frames(),
        });
    }
    let mut frames = Vec::with_capacity(p_traj.n_frames());
    for (n, p_n) in p_traj.frames().iter().enumerate() {
        let t_n = tg.node(n);
        let grad_p = gradient(p_n, g)?;
        let mut u = Vec::with_capacity(g.n_cells());
        for (i, x_i) in g.centers().enumerate() {
            let q = coef.drift_gain(t_n, x_i) * grad_p.get(i);
            let eval = hamiltonian_value(l, ball, t_n, x_i, q)?;
            u.push(eval.maximizer_u);
        }
        frames.push(crate::grid::Field::new(u));
    }
    Ok(TrajectoryField::new(frames))
}

/// Closed-form conjugate of `L(u) = u^2 / 2` on `[-a, a]` (Huber function);
/// reference for tests.
pub fn huber_conjugate(a: f64, q: f64) -> f64 {
    if q.abs() <= a {
        0.5 * q * q
    } else {
        a * q.abs() - 0.5 * a * a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ball(a: f64) -> ControlBall {
        ControlBall::new(a).unwrap()
    }

    fn half_quadratic() -> LagrangianSpec {
        LagrangianSpec::quadratic(0.5, 512)
    }

    #[test]
    fn linear_objective_saturates_the_ball() {
        let l = LagrangianSpec::zero(512);
        let h = hamiltonian_value(&l, &ball(1.0), 0.0, 0.0, 0.7).unwrap();
        assert!((h.value - 0.7).abs() < 1e-12);
        assert_eq!(h.maximizer_u, 1.0);
    }

    #[test]
    fn zero_lagrangian_at_zero_q_ties_to_zero_control() {
        let l = LagrangianSpec::zero(512);
        let h = hamiltonian_value(&l, &ball(1.0), 0.0, 0.0, 0.0).unwrap();
        assert_eq!(h.value, 0.0);
        assert_eq!(h.maximizer_u, 0.0);
    }

    #[test]
    fn quadratic_matches_huber_inside_ball() {
        let h = hamiltonian_value(&half_quadratic(), &ball(1.0), 0.0, 0.0, 0.5).unwrap();
        assert!((h.value - 0.125).abs() < 1e-12, "value = {}", h.value);
        assert!((h.maximizer_u - 0.5).abs() < 1e-8);
    }

    #[test]
    fn quadratic_matches_huber_saturated_branch() {
        let h = hamiltonian_value(&half_quadratic(), &ball(1.0), 0.0, 0.0, 2.0).unwrap();
        assert!((h.value - 1.5).abs() < 1e-12, "value = {}", h.value);
        assert!((h.maximizer_u - 1.0).abs() < 1e-8);
    }

    #[test]
    fn discrete_sup_stays_within_stated_error_of_huber() {
        let l = half_quadratic();
        let b = ball(1.0);
        let k = l.resolution() as f64;
        for j in 0..=120 {
            let q = -3.0 + 0.05 * j as f64;
            let h = hamiltonian_value(&l, &b, 0.0, 0.0, q).unwrap();
            let bound = (q.abs() + 1.0) * (1.0 / k);
            assert!(
                (h.value - huber_conjugate(1.0, q)).abs() <= bound,
                "q = {q}: {} vs {}",
                h.value,
                huber_conjugate(1.0, q)
            );
        }
    }

    #[test]
    fn non_finite_lagrangian_is_reported() {
        let l = LagrangianSpec::new(|_, _, u| if u > 0.5 { f64::NAN } else { 0.0 }, 64, false)
            .unwrap();
        let err = hamiltonian_value(&l, &ball(1.0), 0.0, 0.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::LagrangianEvaluation { .. }));
    }

    #[test]
    fn lipschitz_certificate_reference_cases() {
        let l = half_quadratic();
        let b = ball(1.0);
        assert!(lipschitz_certificate(&l, &b, 0.3, 0.3, 0.0, 0.0).unwrap());
        // Huber gap |H(10) - H(0)| = 9.5 <= 1 * 10.
        assert!(lipschitz_certificate(&l, &b, 0.0, 10.0, 0.0, 0.0).unwrap());
        let lz = LagrangianSpec::zero(512);
        let b2 = ball(2.0);
        assert!(lipschitz_certificate(&lz, &b2, -1.0, 1.0, 0.0, 0.0).unwrap());
    }

    #[test]
    fn extract_control_clamps_and_zeros() {
        use crate::fp::CoefficientField;
        use crate::grid::{Boundary, Field, Grid, TimeGrid, TrajectoryField};

        let g = Grid::new(-1.0, 1.0, 16, Boundary::NoFlux).unwrap();
        let tg = TimeGrid::new(1.0, 2).unwrap();
        let coef = CoefficientField::constant(0.1, 0.1, 1.0).unwrap();
        let l = half_quadratic();
        let b = ball(1.0);

        // Spatially constant p: q = 0 everywhere, so u = 0 exactly.
        let p = TrajectoryField::constant_in_time(Field::constant(16, -2.0), 2);
        let u = extract_control(&p, &coef, &l, &b, &g, &tg).unwrap();
        for f in u.frames() {
            assert!(f.values().iter().all(|v| *v == 0.0));
        }

        // p = 0.3 x gives dp/dx = 0.3, u = clamp(0.3) = 0.3 in the interior.
        let p = TrajectoryField::constant_in_time(Field::from_fn(&g, |x| 0.3 * x), 2);
        let u = extract_control(&p, &coef, &l, &b, &g, &tg).unwrap();
        assert!((u.frame(0).get(8) - 0.3).abs() < 1e-8);

        // p = 5 x saturates: u = 1.
        let p = TrajectoryField::constant_in_time(Field::from_fn(&g, |x| 5.0 * x), 2);
        let u = extract_control(&p, &coef, &l, &b, &g, &tg).unwrap();
        assert!((u.frame(0).get(8) - 1.0).abs() < 1e-12);
        for f in u.frames() {
            assert!(f.values().iter().all(|v| v.abs() <= 1.0));
        }
    }

    proptest! {
        // Fenchel-Young: H(q) >= q v - L(v) for grid controls, equality at the maximizer.
        #[test]
        fn conjugate_inequality_on_the_grid(q in -4.0f64..4.0, j in 0usize..=64) {
            let l = LagrangianSpec::quadratic(0.5, 32);
            let b = ball(1.0);
            let h = hamiltonian_value(&l, &b, 0.0, 0.0, q).unwrap();
            let v = -1.0 + j as f64 / 32.0;
            prop_assert!(h.value >= q * v - l.eval(0.0, 0.0, v) - 1e-12);
            let at_max = q * h.maximizer_u - l.eval(0.0, 0.0, h.maximizer_u);
            prop_assert!((h.value - at_max).abs() <= 1e-12);
        }

        // Subdifferential monotonicity of the selection for strictly convex L.
        #[test]
        fn maximizer_monotone_in_q(q1 in -3.0f64..3.0, q2 in -3.0f64..3.0) {
            let l = half_quadratic();
            let b = ball(1.0);
            let (qa, qb) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
            let ua = hamiltonian_value(&l, &b, 0.0, 0.0, qa).unwrap().maximizer_u;
            let ub = hamiltonian_value(&l, &b, 0.0, 0.0, qb).unwrap().maximizer_u;
            prop_assert!(ua <= ub + 1e-9);
        }

        #[test]
        fn lipschitz_holds_for_random_pairs(q1 in -10.0f64..10.0, q2 in -10.0f64..10.0) {
            let l = half_quadratic();
            let b = ball(1.0);
            prop_assert!(lipschitz_certificate(&l, &b, q1, q2, 0.0, 0.0).unwrap());
        }
    }
}
