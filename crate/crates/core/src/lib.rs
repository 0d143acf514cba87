//! Implicit resolvent solver for time-varying nonlinear Fokker–Planck equations
//!
//! ```text
//! u_t − Δ(a(t,x,u)·u) + div(b(t,x,u)·u) = 0   on (0,T) × [−L,L]^d
//! ```
//!
//! written with β(t,x,r) = a(t,x,r)·r and b*(t,x,r) = b(t,x,r)·r. Each time step solves the
//! ε-regularized resolvent equation
//!
//! ```text
//! u + μ·(−Δβ(t,u) + εβ(t,u) + div b*(t,u)) = v
//! ```
//!
//! on a cell-centred grid, measuring residuals in the discrete H⁻¹ norm induced by
//! (εI − Δ)⁻¹. Around the solver sit hypothesis checks for the coefficients, verification
//! procedures for the qualitative properties of the flow (L¹ contraction, positivity, mass
//! balance, L∞ growth, resolvent Lipschitz bounds, weak-form consistency) and an
//! interacting-particle simulation of the associated McKean–Vlasov SDE.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration and the
//! command-line front end live in the `fpk-cli` crate.
//!
//! ## Modules
//!
//! - [`coefficients`]: coefficient models, evaluation, hypothesis reports, Λ(b,β)
//! - [`grid`]: truncated box, conservative difference operators, Helmholtz solve, H⁻¹ inner product
//! - [`resolvent`]: the operator A_ε(t) and the Newton/Picard resolvent solver
//! - [`stepper`]: implicit Euler trajectories, exponential formula, ε-continuation
//! - [`invariants`]: executable checks over trajectories and resolvent solves
//! - [`particles`]: Euler–Maruyama simulation of the McKean–Vlasov SDE

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod coefficients;
mod error;
mod fft;
pub mod grid;
pub mod invariants;
pub mod linalg;
pub mod particles;
pub mod resolvent;
pub mod rng;
pub mod stepper;
pub mod sum;

pub use error::{Error, Result};
