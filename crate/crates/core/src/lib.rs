//! Quantum drift-diffusion with Bohm potential and self-interaction.
//!
//! The crate solves
//!
//! ```text
//! n_t = div(n ∇F),   F = -ε² Δ√n / √n + log n - σ Φ,   -ΔΦ = n - C,
//! ```
//!
//! on a slab or a radially symmetric disc/ball with no-flux conditions for
//! `n` and a homogeneous Dirichlet condition for `Φ`. Each implicit time step
//! writes `n = e^y / ‖e^y‖₁`, which keeps the density positive and normalized,
//! and solves the coupled elliptic system for `(y, F, Φ)`.
//!
//! Around the solver sit entropy diagnostics, a randomized lab for the
//! functional inequalities behind the entropy estimate, the ε = 0 drift-diffusion
//! model with a blowup detector, and a batch runner. See the `examples/`
//! directory for one runnable program per capability.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod banded;
pub mod classical;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod grid;
pub mod inequality;
pub mod profiles;
pub mod scheme;
pub mod sweep;
pub mod trajectory;

pub use error::{Error, Result};
pub use grid::{build_grid, Bc, DensityState, Geometry, Grid, ScalarField};
