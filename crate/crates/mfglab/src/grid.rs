//! Discretization substrate: cell-centered meshes, time partitions, field
//! containers, and the discrete calculus (quadrature, gradient, L^m norms)
//! shared by every solver.

use crate::{Error, Result};

/// Boundary treatment of the truncated spatial domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Zero-flux walls: conserves total mass exactly.
    NoFlux,
    /// Periodic wrap-around.
    Periodic,
}

/// Uniform cell-centered mesh on `[x_min, x_max]`.
///
/// Cell centers sit at `x_i = x_min + (i + 1/2) dx`, `i = 0..n_cells`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n_cells: usize,
    dx: f64,
    boundary: Boundary,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n_cells: usize, boundary: Boundary) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(Error::InvalidParameter {
                name: "x_min/x_max",
                reason: format!("need finite x_min < x_max, got [{x_min}, {x_max}]"),
            });
        }
        if n_cells < 4 {
            return Err(Error::GridTooSmall { n_cells, min: 4 });
        }
        let dx = (x_max - x_min) / n_cells as f64;
        Ok(Self { x_min, x_max, n_cells, dx, boundary })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Center of cell `i`.
    pub fn cell_center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx
    }

    /// Left face of cell `i` (face `i + 1/2` is `cell_face(i + 1)`).
    pub fn cell_face(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_cells).map(|i| self.cell_center(i))
    }

    /// Index of the cell containing `x`, clamped into the domain.
    pub fn cell_index(&self, x: f64) -> usize {
        let raw = ((x - self.x_min) / self.dx).floor();
        if raw < 0.0 {
            0
        } else {
            (raw as usize).min(self.n_cells - 1)
        }
    }

    fn check_len(&self, f: &Field) -> Result<()> {
        if f.len() != self.n_cells {
            return Err(Error::DimensionMismatch { expected: self.n_cells, got: f.len() });
        }
        Ok(())
    }
}

/// Uniform partition of `[0, T]` into `n_steps` intervals.
///
/// The degenerate horizon `T = 0`, `n_steps = 0` is admitted so that a
/// forward solve may return just the initial frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon_t: f64,
    n_steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(horizon_t: f64, n_steps: usize) -> Result<Self> {
        if !horizon_t.is_finite() || horizon_t < 0.0 {
            return Err(Error::InvalidParameter {
                name: "horizon_t",
                reason: format!("need finite horizon >= 0, got {horizon_t}"),
            });
        }
        if (horizon_t > 0.0) != (n_steps > 0) {
            return Err(Error::InvalidParameter {
                name: "n_steps",
                reason: format!(
                    "horizon {horizon_t} and n_steps {n_steps} must be both zero or both positive"
                ),
            });
        }
        let dt = if n_steps > 0 { horizon_t / n_steps as f64 } else { 0.0 };
        Ok(Self { horizon_t, n_steps, dt })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon_t
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Node `t_n = n dt`; `t_n` hits `T` exactly at `n = n_steps`.
    pub fn node(&self, n: usize) -> f64 {
        if n == self.n_steps {
            self.horizon_t
        } else {
            n as f64 * self.dt
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(|n| self.node(n))
    }
}

/// One real value per cell center.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self { values: vec![c; n] }
    }

    /// Sample `f` at the cell centers of `g`.
    pub fn from_fn(g: &Grid, f: impl Fn(f64) -> f64) -> Self {
        Self { values: g.centers().map(f).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Pointwise `alpha * self + beta * other`.
    pub fn lin_comb(&self, alpha: f64, other: &Field, beta: f64) -> Result<Field> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: other.len() });
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Ok(Field::new(values))
    }
}

/// Time-indexed sequence of fields, frame `n` holding the state at `t_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryField {
    frames: Vec<Field>,
}

impl TrajectoryField {
    pub fn new(frames: Vec<Field>) -> Self {
        Self { frames }
    }

    /// `n_steps + 1` copies of one field.
    pub fn constant_in_time(field: Field, n_steps: usize) -> Self {
        Self { frames: vec![field; n_steps + 1] }
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn frame(&self, n: usize) -> &Field {
        &self.frames[n]
    }

    pub fn frames(&self) -> &[Field] {
        &self.frames
    }

    pub fn last(&self) -> &Field {
        self.frames.last().expect("trajectory has at least one frame")
    }

    /// Framewise `alpha * self + beta * other`.
    pub fn lin_comb(&self, alpha: f64, other: &TrajectoryField, beta: f64) -> Result<TrajectoryField> {
        if self.n_frames() != other.n_frames() {
            return Err(Error::DimensionMismatch {
                expected: self.n_frames(),
                got: other.n_frames(),
            });
        }
        let frames = self
            .frames
            .iter()
            .zip(&other.frames)
            .map(|(a, b)| a.lin_comb(alpha, b, beta))
            .collect::<Result<Vec<_>>>()?;
        Ok(TrajectoryField::new(frames))
    }
}

/// Midpoint-rule quadrature: `sum_i f_i dx`.
pub fn integrate(f: &Field, g: &Grid) -> Result<f64> {
    g.check_len(f)?;
    Ok(f.values().iter().sum::<f64>() * g.dx())
}

/// Discrete spatial gradient.
///
/// Centered differences in the interior; first-order one-sided stencils at
/// no-flux walls, wrap-around for periodic grids.
pub fn gradient(f: &Field, g: &Grid) -> Result<Field> {
    g.check_len(f)?;
    let n = g.n_cells();
    if n < 3 {
        return Err(Error::GridTooSmall { n_cells: n, min: 3 });
    }
    let v = f.values();
    let dx = g.dx();
    let two_dx = 2.0 * dx;
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (v[i + 1] - v[i - 1]) / two_dx;
    }
    match g.boundary() {
        Boundary::NoFlux => {
            out[0] = (v[1] - v[0]) / dx;
            out[n - 1] = (v[n - 1] - v[n - 2]) / dx;
        }
        Boundary::Periodic => {
            out[0] = (v[1] - v[n - 1]) / two_dx;
            out[n - 1] = (v[0] - v[n - 2]) / two_dx;
        }
    }
    Ok(Field::new(out))
}

/// Discrete `L^m` norm: `(sum_i |f_i|^m dx)^(1/m)`; `m = inf` gives `max |f_i|`.
pub fn lm_norm(f: &Field, g: &Grid, m: f64) -> Result<f64> {
    g.check_len(f)?;
    if m.is_nan() || m < 1.0 {
        return Err(Error::InvalidExponent { m });
    }
    if m.is_infinite() {
        return Ok(f.max_abs());
    }
    let sum: f64 = f.values().iter().map(|v| v.abs().powf(m)).sum();
    Ok((sum * g.dx()).powf(1.0 / m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_grid(n: usize) -> Grid {
        Grid::new(0.0, 1.0, n, Boundary::NoFlux).unwrap()
    }

    #[test]
    fn grid_rejects_degenerate_domains() {
        assert!(Grid::new(1.0, 1.0, 10, Boundary::NoFlux).is_err());
        assert!(Grid::new(0.0, 1.0, 3, Boundary::NoFlux).is_err());
        assert!(matches!(
            Grid::new(0.0, 1.0, 3, Boundary::NoFlux),
            Err(Error::GridTooSmall { .. })
        ));
    }

    #[test]
    fn cell_centers_strictly_increasing() {
        let g = Grid::new(-2.5, 3.5, 17, Boundary::NoFlux).unwrap();
        let xs: Vec<f64> = g.centers().collect();
        for w in xs.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!((xs[0] - (-2.5 + 0.5 * g.dx())).abs() < 1e-15);
    }

    #[test]
    fn time_grid_hits_horizon_exactly() {
        let tg = TimeGrid::new(0.7, 7).unwrap();
        assert_eq!(tg.node(7), 0.7);
        assert!(TimeGrid::new(1.0, 0).is_err());
        let trivial = TimeGrid::new(0.0, 0).unwrap();
        assert_eq!(trivial.n_steps(), 0);
    }

    #[test]
    fn integrate_constant_is_exact() {
        for n in [4, 17, 100] {
            let g = unit_grid(n);
            let one = Field::constant(n, 1.0);
            assert_eq!(integrate(&one, &g).unwrap(), g.dx() * n as f64);
            assert!((integrate(&one, &g).unwrap() - 1.0).abs() < 1e-14);
            let zero = Field::zeros(n);
            assert_eq!(integrate(&zero, &g).unwrap(), 0.0);
        }
    }

    #[test]
    fn integrate_x_squared_matches_antiderivative() {
        // Midpoint rule on f(x) = x^2 over [0, 1]; exact value 1/3.
        let g = unit_grid(100);
        let f = Field::from_fn(&g, |x| x * x);
        let q = integrate(&f, &g).unwrap();
        assert!((q - 1.0 / 3.0).abs() < 1e-4, "q = {q}");
        // Midpoint rule underestimates a convex integrand.
        assert!(q < 1.0 / 3.0);
    }

    #[test]
    fn integrate_rejects_length_mismatch() {
        let g = unit_grid(10);
        let f = Field::zeros(9);
        assert!(matches!(integrate(&f, &g), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = unit_grid(25);
        let f = Field::constant(25, 3.25);
        let df = gradient(&f, &g).unwrap();
        assert!(df.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_linear_exact_in_interior() {
        let g = unit_grid(50);
        let f = Field::from_fn(&g, |x| x);
        let df = gradient(&f, &g).unwrap();
        for i in 0..50 {
            assert!((df.get(i) - 1.0).abs() < 1e-12, "i = {i}");
        }
    }

    #[test]
    fn gradient_periodic_matches_cosine() {
        let g = Grid::new(0.0, 2.0 * std::f64::consts::PI, 200, Boundary::Periodic).unwrap();
        let f = Field::from_fn(&g, f64::sin);
        let df = gradient(&f, &g).unwrap();
        let max_err = g
            .centers()
            .enumerate()
            .map(|(i, x)| (df.get(i) - x.cos()).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err <= 2e-4, "max_err = {max_err}");
    }

    #[test]
    fn lm_norm_reference_values() {
        let g = unit_grid(64);
        let one = Field::constant(64, 1.0);
        assert!((lm_norm(&one, &g, 2.0).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(lm_norm(&one, &g, f64::INFINITY).unwrap(), 1.0);

        let g = unit_grid(400);
        let f = Field::from_fn(&g, |x| x);
        // Exact L^2 norm of x on [0, 1] is 1/sqrt(3).
        let exact = 1.0 / 3.0f64.sqrt();
        assert!((lm_norm(&f, &g, 2.0).unwrap() - exact).abs() < 1e-4);

        assert!(matches!(lm_norm(&f, &g, 0.5), Err(Error::InvalidExponent { .. })));
    }

    proptest! {
        #[test]
        fn integrate_is_linear(
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            fv in proptest::collection::vec(-10.0f64..10.0, 32),
            hv in proptest::collection::vec(-10.0f64..10.0, 32),
        ) {
            let g = unit_grid(32);
            let f = Field::new(fv);
            let h = Field::new(hv);
            let combo = f.lin_comb(a, &h, b).unwrap();
            let lhs = integrate(&combo, &g).unwrap();
            let rhs = a * integrate(&f, &g).unwrap() + b * integrate(&h, &g).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs().max(rhs.abs())));
        }

        #[test]
        fn lm_norm_monotone_in_pointwise_abs(
            fv in proptest::collection::vec(-5.0f64..5.0, 32),
            scale in proptest::collection::vec(0.0f64..1.0, 32),
            m in prop_oneof![Just(1.0), Just(2.0), Just(4.0), Just(f64::INFINITY)],
        ) {
            let g = unit_grid(32);
            let h = Field::new(fv.clone());
            let f = Field::new(fv.iter().zip(&scale).map(|(v, s)| v * s).collect());
            prop_assert!(lm_norm(&f, &g, m).unwrap() <= lm_norm(&h, &g, m).unwrap() + 1e-12);
        }

        #[test]
        fn hoelder_inequality_for_random_fields(
            fv in proptest::collection::vec(-5.0f64..5.0, 32),
            hv in proptest::collection::vec(-5.0f64..5.0, 32),
        ) {
            let g = unit_grid(32);
            let f = Field::new(fv.clone());
            let h = Field::new(hv.clone());
            let prod = Field::new(fv.iter().zip(&hv).map(|(a, b)| (a * b).abs()).collect());
            let lhs = integrate(&prod, &g).unwrap();
            let rhs = lm_norm(&f, &g, 2.0).unwrap() * lm_norm(&h, &g, 2.0).unwrap();
            prop_assert!(lhs <= rhs + 1e-12);
        }
    }
}
