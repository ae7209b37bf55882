//! Stability of discrete-wave periodic orbits of delay differential
//! equations with one discrete delay.
//!
//! For a DDE `x'(t) = f(x(t), x(t − τ))` with a periodic orbit `x_*` and a
//! spatio-temporal symmetry `h x_*(t) = x_*(t + τ)`, the nonzero spectrum of
//! the reduced monodromy operator `h⁻¹ U(τ, 0)` is encoded by the zeros of
//! `det Δ(z)`, where
//!
//! ```text
//! Δ(z) = I − z h⁻¹ F(τ, z),    F' = [A(t) + z B(t) h⁻¹] F,  F(0, z) = I
//! ```
//!
//! and `A`, `B` are the partial derivatives of `f` along the orbit. A zero
//! `z` of order `m` corresponds to a Floquet multiplier `μ = 1/z` of
//! algebraic multiplicity `m`.
//!
//! The crate is organized bottom-up:
//!
//! - [`numkernel`]: dense complex LU, determinants and eigenvalues.
//! - [`model`]: DDE problems, orbits, symmetry validation, linearization.
//! - [`flow`]: adaptive integration of `F(t, z)` and `∂F/∂z`.
//! - [`charmat`]: `Δ(z)`, `det Δ(z)` and the logarithmic derivative.
//! - [`roots`]: argument-principle root finding and stability verdicts.
//! - [`oracle`]: dense discretization of `h⁻¹U(τ, 0) = V + R` for
//!   cross-validation.
//! - [`control`]: equivariant delayed feedback and gain scans.
//! - [`catalog`], [`config`], [`report`]: builtin problems, configuration
//!   files and serialized output used by the command-line front end.

pub mod catalog;
pub mod charmat;
pub mod config;
pub mod control;
pub mod error;
pub mod flow;
pub mod model;
pub mod numkernel;
pub mod oracle;
pub mod report;
pub mod roots;

pub use error::{Error, Result};
pub use numkernel::{CMatrix, C64};
