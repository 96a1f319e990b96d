//! Desk-scale laboratory for strictly convex functions that agree on the
//! boundary of a convex body up to an additive constant.
//!
//! The crate searches for a covector `γ̃` (equivalently the tilt `η̃ = −γ̃`)
//! that makes the boundary functional `φ + ⟨η̃, ·⟩` attain its minimum at two
//! or more boundary points, then checks numerically that this single `γ̃`
//! lies in the algebraic interior of `∇J(int C)` for every member `J` of a
//! generated family sharing the boundary trace `φ`. Perturbed gradient
//! equations, the minimax machinery behind the construction, and the
//! half-line counterexample are exercised by the same pipeline.
//!
//! Layout:
//! - [`geometry`]: convex bodies, projection, boundary atlases.
//! - [`functions`]: smooth oracles, diagnostics, boundary traces, families.
//! - [`solvers`]: projected gradient, boundary minimization, sweeps.
//! - [`minimax`]: finite minimax gaps and two-minima witnesses.
//! - [`theorems`]: the verification pipelines and their reports.
//! - [`experiment`]: config-driven runner used by the `tracelab` binary.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod experiment;
pub mod functions;
pub mod geometry;
pub mod minimax;
pub mod oracle;
pub mod solvers;
pub mod svg;
pub mod theorems;
pub mod tol;

mod rng;
mod ser;

pub use nalgebra::{DMatrix, DVector};

/// A point of `R^n`.
pub type Point = DVector<f64>;
/// An element of the dual space, identified with a vector of `R^n`.
pub type Covector = DVector<f64>;
