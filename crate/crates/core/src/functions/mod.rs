//! Smooth function oracles and the diagnostics used to certify strict
//! convexity, together with boundary traces and families of functions that
//! share one trace.

mod builtin;
mod diagnostics;
mod family;
pub mod oracle;
mod trace;

use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

pub use builtin::{harmonic_hessian_bound, AffinePiece, FnSpec, Monomial, LOG_SUM_EXP_EPSILON};
pub use diagnostics::{coercivity_probe, finite_diff_check, strict_margin, CoercivityVerdict, MarginEstimate};
pub use family::{make_family, FamilyMember, TraceFamily};
pub use oracle::{Oracle, SmoothFn};
pub use trace::{boundary_trace, is_constant_shift, BoundaryTrace, ShiftVerdict, TraceSource, TraceSpec};

use crate::geometry::{ConvexBody, GeometryError};
use crate::Point;

#[derive(Debug, Error)]
pub enum FunctionError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("not strictly convex: {0}")]
    NotStrictlyConvex(String),
    #[error("not a strictly convex builtin: {0}")]
    NotABuiltin(String),
    #[error("point {point:?} is within {margin:e} of the domain boundary; stencil needs {needed:e}")]
    TooCloseToBoundary { point: Vec<f64>, margin: f64, needed: f64 },
    #[error("traces are sampled on different atlases")]
    AtlasMismatch,
    #[error("perturbation {index} rejected: {reason}")]
    PerturbationRejected { index: usize, reason: String },
    #[error("family members {0} and {1} coincide on every probe point")]
    DuplicateMembers(usize, usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Convexity metadata: a lower bound on the Hessian spectrum over the
/// domain (`0` when unknown) and whether `f(x)/‖x‖ → ∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvexMeta {
    pub margin: f64,
    pub coercive: bool,
}

/// A strictly convex differentiable function with metadata.
#[derive(Clone, Debug)]
pub struct SmoothConvexFn {
    oracle: Oracle,
    domain: Option<ConvexBody>,
    meta: ConvexMeta,
}

impl SmoothConvexFn {
    /// `domain: None` means all of `R^n`.
    pub fn new(oracle: Oracle, domain: Option<ConvexBody>, meta: ConvexMeta) -> Self {
        Self { oracle, domain, meta }
    }

    pub fn oracle(&self) -> &Oracle {
        &self.oracle
    }

    pub fn domain(&self) -> Option<&ConvexBody> {
        self.domain.as_ref()
    }

    pub fn meta(&self) -> ConvexMeta {
        self.meta
    }

    pub fn dim(&self) -> usize {
        self.oracle.dim()
    }

    pub fn value(&self, x: &Point) -> f64 {
        self.oracle.value(x)
    }

    pub fn gradient(&self, x: &Point) -> Point {
        self.oracle.gradient(x)
    }

    pub fn hessian(&self, x: &Point) -> Option<DMatrix<f64>> {
        self.oracle.hessian(x)
    }

    /// `self + other` (metadata: margins add, coercivity is inherited).
    pub fn plus(&self, other: &Oracle) -> SmoothConvexFn {
        let dim = self.dim();
        SmoothConvexFn {
            oracle: Arc::new(oracle::Sum::new(dim, vec![(1.0, self.oracle.clone()), (1.0, other.clone())])),
            domain: self.domain.clone(),
            meta: self.meta,
        }
    }
}
