//! Convex running cost `G(t, x, r)` and terminal cost `G0(x, r)` with their
//! subgradient selections, prox maps `(I + eps G_r)^{-1}`, and Moreau-Yosida
//! envelopes.
//!
//! The costs are assumed sandwiched between a linear lower bound and a
//! quadratic upper bound,
//!
//! ```text
//! alpha(t,x) r <= G(t,x,r) <= C1 r^2 + alphabar(t,x),
//! ```
//!
//! which yields an explicit affine bound `|G_eps'(r)| <= M_G |r| + A(t,x)`
//! on the envelope derivative, checked by [`envelope_bound_scan`].

use crate::{Error, Result};

/// Absolute tolerance of the prox bisection.
const PROX_TOL: f64 = 1e-12;
const PROX_MAX_ITER: usize = 200;

/// Upper limit of admissible `eps` in envelope scans.
pub const ENVELOPE_EPS0: f64 = 1.0;

type CostFn = Box<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
type SlopeFn = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Running cost `G(t, x, r)` with a monotone subgradient selection and its
/// sandwich data.
pub struct ConvexCostSpec {
    eval: CostFn,
    subgradient: CostFn,
    quad_bound: f64,
    lower_slope: SlopeFn,
    upper_offset: SlopeFn,
    strictly_convex: bool,
}

impl ConvexCostSpec {
    pub fn new(
        eval: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        subgradient: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        quad_bound: f64,
        lower_slope: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        upper_offset: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        strictly_convex: bool,
    ) -> Result<Self> {
        if !quad_bound.is_finite() || quad_bound < 0.0 {
            return Err(Error::InvalidParameter {
                name: "quad_bound",
                reason: format!("need finite C1 >= 0, got {quad_bound}"),
            });
        }
        Ok(Self {
            eval: Box::new(eval),
            subgradient: Box::new(subgradient),
            quad_bound,
            lower_slope: Box::new(lower_slope),
            upper_offset: Box::new(upper_offset),
            strictly_convex,
        })
    }

    /// `G = 0`.
    pub fn zero() -> Self {
        Self {
            eval: Box::new(|_, _, _| 0.0),
            subgradient: Box::new(|_, _, _| 0.0),
            quad_bound: 0.0,
            lower_slope: Box::new(|_, _| 0.0),
            upper_offset: Box::new(|_, _| 0.0),
            strictly_convex: false,
        }
    }

    /// `G(r) = slope * r`.
    pub fn linear(slope: f64) -> Self {
        // Upper sandwich: slope*r <= C1 r^2 + slope^2/(4 C1) with any C1 > 0.
        let c1 = 1.0f64.max(slope.abs());
        Self {
            eval: Box::new(move |_, _, r| slope * r),
            subgradient: Box::new(move |_, _, _| slope),
            quad_bound: c1,
            lower_slope: Box::new(move |_, _| slope),
            upper_offset: Box::new(move |_, _| slope * slope / (4.0 * c1)),
            strictly_convex: false,
        }
    }

    /// `G(r) = coeff * r^2`, `coeff > 0`.
    pub fn quadratic(coeff: f64) -> Self {
        Self {
            eval: Box::new(move |_, _, r| coeff * r * r),
            subgradient: Box::new(move |_, _, r| 2.0 * coeff * r),
            quad_bound: coeff,
            lower_slope: Box::new(|_, _| 0.0),
            upper_offset: Box::new(|_, _| 0.0),
            strictly_convex: true,
        }
    }

    /// `G(r) = coeff * r^2 + potential(x) * r`; the linear part acts as a
    /// spatial preference in the coupled system.
    pub fn quadratic_with_potential(
        coeff: f64,
        potential: impl Fn(f64) -> f64 + Send + Sync + Clone + 'static,
    ) -> Self {
        let p1 = potential.clone();
        let p2 = potential.clone();
        let p3 = potential.clone();
        let p4 = potential;
        // Sandwich: c r^2 + p r >= p r (lower slope p) and
        // c r^2 + p r <= (c + 1/2) r^2 + p^2 / 2.
        Self {
            eval: Box::new(move |_, x, r| coeff * r * r + p1(x) * r),
            subgradient: Box::new(move |_, x, r| 2.0 * coeff * r + p2(x)),
            quad_bound: coeff + 0.5,
            lower_slope: Box::new(move |_, x| p3(x)),
            upper_offset: Box::new(move |_, x| 0.5 * p4(x) * p4(x)),
            strictly_convex: coeff > 0.0,
        }
    }

    pub fn eval(&self, t: f64, x: f64, r: f64) -> f64 {
        (self.eval)(t, x, r)
    }

    pub fn subgradient(&self, t: f64, x: f64, r: f64) -> f64 {
        (self.subgradient)(t, x, r)
    }

    pub fn quad_bound(&self) -> f64 {
        self.quad_bound
    }

    pub fn lower_slope(&self, t: f64, x: f64) -> f64 {
        (self.lower_slope)(t, x)
    }

    pub fn upper_offset(&self, t: f64, x: f64) -> f64 {
        (self.upper_offset)(t, x)
    }

    pub fn strictly_convex(&self) -> bool {
        self.strictly_convex
    }
}

/// Terminal cost `G0(x, r)`; same structure as [`ConvexCostSpec`] without the
/// time argument.
pub struct TerminalCostSpec {
    eval: Box<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    subgradient: Box<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    quad_bound: f64,
    strictly_convex: bool,
}

impl TerminalCostSpec {
    pub fn new(
        eval: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        subgradient: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        quad_bound: f64,
        strictly_convex: bool,
    ) -> Self {
        Self {
            eval: Box::new(eval),
            subgradient: Box::new(subgradient),
            quad_bound,
            strictly_convex,
        }
    }

    pub fn zero() -> Self {
        Self::new(|_, _| 0.0, |_, _| 0.0, 0.0, false)
    }

    pub fn linear(slope: f64) -> Self {
        Self::new(move |_, r| slope * r, move |_, _| slope, 1.0f64.max(slope.abs()), false)
    }

    pub fn quadratic(coeff: f64) -> Self {
        Self::new(move |_, r| coeff * r * r, move |_, r| 2.0 * coeff * r, coeff, true)
    }

    pub fn eval(&self, x: f64, r: f64) -> f64 {
        (self.eval)(x, r)
    }

    pub fn subgradient(&self, x: f64, r: f64) -> f64 {
        (self.subgradient)(x, r)
    }

    pub fn quad_bound(&self) -> f64 {
        self.quad_bound
    }

    pub fn strictly_convex(&self) -> bool {
        self.strictly_convex
    }
}

/// Result of an envelope-derivative bound scan.
#[derive(Debug, Clone, Copy)]
pub struct EnvelopeBoundReport {
    /// Slope of the admissible affine bound.
    pub m_g: f64,
    /// Sup of the offset `A(t, x)` over the sampled nodes.
    pub a_field_linf: f64,
    /// `max |G_eps'(r)| - (M_G |r| + A)` over all samples; `<= 0` means the
    /// bound held everywhere.
    pub max_violation: f64,
}

/// Prox map `theta* = (I + eps G_r(t, x, .))^{-1} r`, i.e. the minimizer of
/// `|r - theta|^2 / (2 eps) + G(t, x, theta)`.
///
/// Solved by bisection on the strictly increasing map
/// `theta -> theta + eps * subgradient(theta)`; no differentiability of `G`
/// is required beyond the monotone selection.
pub fn prox(g: &ConvexCostSpec, eps: f64, t: f64, x: f64, r: f64) -> Result<f64> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: format!("need eps > 0, got {eps}"),
        });
    }
    let phi = |theta: f64| theta + eps * g.subgradient(t, x, theta) - r;

    let g_r = g.subgradient(t, x, r);
    if !g_r.is_finite() {
        return Err(Error::ConvexityViolation(format!(
            "subgradient non-finite at r = {r}"
        )));
    }
    // theta* = r - eps g(theta*) lies between r and r - eps g(r) by
    // monotonicity of the subgradient.
    let (mut lo, mut hi) = if g_r >= 0.0 { (r - eps * g_r, r) } else { (r, r - eps * g_r) };
    let f_lo = phi(lo);
    let f_hi = phi(hi);
    let slack = 1e-9 * (1.0 + r.abs());
    if f_lo > slack || f_hi < -slack {
        return Err(Error::ConvexityViolation(format!(
            "theta + eps*subgradient(theta) is not increasing through r = {r} \
             (phi({lo}) = {f_lo}, phi({hi}) = {f_hi})"
        )));
    }
    // Enforced a-priori bound |theta*| <= |r| + eps |g(0)|.
    let reach = r.abs() + eps * g.subgradient(t, x, 0.0).abs();
    lo = lo.max(-reach);
    hi = hi.min(reach);
    if hi < lo {
        return Err(Error::ConvexityViolation(format!(
            "prox bracket for r = {r} escapes the bound |theta| <= |r| + eps |subgradient(0)|"
        )));
    }
    if hi - lo <= PROX_TOL {
        return Ok(0.5 * (lo + hi));
    }
    let mut width = hi - lo;
    for _ in 0..PROX_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let f_mid = phi(mid);
        if !f_mid.is_finite() {
            return Err(Error::ConvexityViolation(format!(
                "subgradient non-finite at theta = {mid}"
            )));
        }
        if f_mid < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        width *= 0.5;
        if width <= PROX_TOL {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Moreau-Yosida envelope `G_eps(r) = |r - prox|^2 / (2 eps) + G(prox)`.
pub fn moreau_value(g: &ConvexCostSpec, eps: f64, t: f64, x: f64, r: f64) -> Result<f64> {
    let p = prox(g, eps, t, x, r)?;
    let d = r - p;
    Ok(d * d / (2.0 * eps) + g.eval(t, x, p))
}

/// Envelope derivative `G_eps'(r) = (r - prox) / eps`.
pub fn moreau_derivative(g: &ConvexCostSpec, eps: f64, t: f64, x: f64, r: f64) -> Result<f64> {
    let p = prox(g, eps, t, x, r)?;
    Ok((r - p) / eps)
}

/// Admissible affine bound `(M_G, A(t,x))` for `|G_eps'|` derived from the
/// sandwich constants: completing the square in the convexity inequality
/// `G_eps'(r) h <= G_eps(r + h) - G_eps(r)` and bounding the discriminant
/// gives
///
/// ```text
/// M_G  = 2 C1 + 2 sqrt(C1 (C1 + 1/2)),
/// A    = 2 sqrt(C1) * sqrt(alphabar + (1 + eps0)/2 * alpha^2).
/// ```
pub fn envelope_bound_constants(g: &ConvexCostSpec, t: f64, x: f64) -> (f64, f64) {
    let c1 = g.quad_bound();
    let m_g = 2.0 * c1 + 2.0 * (c1 * (c1 + 0.5)).sqrt();
    let alpha = g.lower_slope(t, x);
    let alphabar = g.upper_offset(t, x);
    let arg = (alphabar + 0.5 * (1.0 + ENVELOPE_EPS0) * alpha * alpha).max(0.0);
    let a = 2.0 * c1.sqrt() * arg.sqrt();
    (m_g, a)
}

/// Scans `|G_eps'(r)| <= M_G |r| + A(t, x)` over the given samples.
pub fn envelope_bound_scan(
    g: &ConvexCostSpec,
    eps_list: &[f64],
    r_samples: &[f64],
    tx_samples: &[(f64, f64)],
) -> Result<EnvelopeBoundReport> {
    for &eps in eps_list {
        if !(eps > 0.0 && eps < ENVELOPE_EPS0) {
            return Err(Error::InvalidParameter {
                name: "eps_list",
                reason: format!("need 0 < eps < {ENVELOPE_EPS0}, got {eps}"),
            });
        }
    }
    let mut m_g = 0.0f64;
    let mut a_linf = 0.0f64;
    let mut max_violation = f64::NEG_INFINITY;
    for &(t, x) in tx_samples {
        let (m, a) = envelope_bound_constants(g, t, x);
        m_g = m_g.max(m);
        a_linf = a_linf.max(a);
        for &eps in eps_list {
            for &r in r_samples {
                let d = moreau_derivative(g, eps, t, x, r)?;
                max_violation = max_violation.max(d.abs() - (m * r.abs() + a));
            }
        }
    }
    Ok(EnvelopeBoundReport { m_g, a_field_linf: a_linf, max_violation })
}
