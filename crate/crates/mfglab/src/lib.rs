//! # mfglab
//!
//! A numerical laboratory for a mean field game system on a truncated
//! one-dimensional domain. The system couples a forward Fokker-Planck
//! equation for the population density `rho` with a backward
//! Hamilton-Jacobi-Bellman equation for the value function `p`:
//!
//! ```text
//! d rho/dt + d/dx( f0 u rho ) - d²(a rho)/dx² = 0,        rho(0) = rho0,
//! d p/dt   + H(t, x, f0 dp/dx) + a d²p/dx²    = G_r(rho), p(T)   = -G0_r(rho(T)),
//! u(t,x)   = argmax_{|v| <= a_ball} { f0 v dp/dx - L(t,x,v) }.
//! ```
//!
//! The equilibrium is computed by a damped Picard iteration on the
//! forward-backward pair, and then cross-checked through independent
//! machinery:
//!
//! * a constant-coefficient heat-kernel / Duhamel integral operator whose
//!   Picard fixed point must reproduce the grid solution ([`kernel_oracle`]),
//! * Moreau-Yosida envelopes and prox maps of the convex couplings with
//!   their closed-form values ([`convexcost`]),
//! * a monotonicity (uniqueness) gap and pointwise spike-optimality checks
//!   ([`mfg`]),
//! * an Euler-Maruyama particle simulation whose empirical marginals must
//!   match the Fokker-Planck density ([`particles`]).
//!
//! The [`cli`] module drives scenarios from TOML configs and persists
//! fields, residual histories and a run manifest; the `mfglab` binary
//! exposes the `run`, `oracle`, `particles` and `report` subcommands.

pub mod cli;
pub mod convexcost;
mod error;
pub mod fp;
pub mod grid;
pub mod hamiltonian;
pub mod hjb;
pub mod kernel_oracle;
pub mod mfg;
pub mod particles;
mod tridiag;

pub use error::{Error, Result};
