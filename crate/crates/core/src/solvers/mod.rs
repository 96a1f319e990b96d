//! Constrained minimization over bodies and their boundaries, gradient
//! equations, algebraic-interior tests, and λ-sweeps.

mod boundary;
mod pg;
mod sweep;

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

pub use boundary::{minimize_over_boundary, Basin, BoundarySolve};
pub use pg::{minimize_over_body, solve_gradient_equation};
pub use sweep::{
    algebraic_interior_test, check_sublevel, default_directions, lambda_sweep, DirectionResult, InteriorTestReport,
    SublevelVerdict, SweepResult,
};

pub(crate) use boundary::minimize_boundary_fn;

use crate::geometry::{GeometryError, Membership};
use crate::tol;
use crate::Point;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("no start point has a finite objective value")]
    NoFeasibleStart,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub tol_solve: f64,
    pub iter_cap: usize,
    pub starts: usize,
    pub seed: u64,
    /// Keep the iterate log of the best start.
    pub trace_iterates: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol_solve: tol::TOL_SOLVE, iter_cap: tol::ITER_CAP, starts: tol::STARTS, seed: 0, trace_iterates: false }
    }
}

impl SolveOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    IterCap,
    /// Starts converged to different points.
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Location {
    Interior { margin: f64 },
    Boundary,
}

impl Location {
    pub(crate) fn of(m: Membership) -> Self {
        match m {
            Membership::Interior { margin } => Location::Interior { margin },
            _ => Location::Boundary,
        }
    }

    pub fn is_interior(&self) -> bool {
        matches!(self, Location::Interior { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IterRecord {
    pub iteration: usize,
    pub value: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveResult {
    #[serde(serialize_with = "crate::ser::point")]
    pub x_star: Point,
    pub value: f64,
    /// `‖∇J(x*) − γ‖` for equation solves; the unit-step gradient mapping
    /// `‖x* − P(x* − ∇f(x*))‖` for plain minimization; the final parameter
    /// bracket for boundary solves.
    pub grad_residual: f64,
    /// Gradient-mapping residual that decides `Converged`.
    pub pg_residual: f64,
    pub location: Location,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Largest distance between a converged start and the best point.
    pub start_spread: f64,
    #[serde(skip)]
    pub trace: Vec<IterRecord>,
}

impl SolveResult {
    /// Converged, interior, and the equation residual within `tol`.
    pub fn interior_solution(&self, tol: f64) -> bool {
        self.status == SolveStatus::Converged && self.location.is_interior() && self.grad_residual <= tol
    }
}

/// Dumps an iterate log as `iteration,value,residual`.
pub fn write_iterates_csv(w: &mut impl Write, trace: &[IterRecord]) -> std::io::Result<()> {
    writeln!(w, "iteration,value,residual")?;
    for r in trace {
        writeln!(w, "{},{:e},{:e}", r.iteration, r.value, r.residual)?;
    }
    Ok(())
}
