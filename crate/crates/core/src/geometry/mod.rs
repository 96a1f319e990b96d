//! Convex bodies, projections, and boundary atlases.

mod body;
mod boundary;
mod hull;
mod vanishing;

use thiserror::Error;

pub use body::{ConvexBody, Facet, Halfspace, Membership, Polytope, Shape};
pub use boundary::{
    certify_nonconvex_boundary, sample_boundary, BoundaryAtlas, BoundaryConvexity, BoundarySample, Chart,
};
pub use vanishing::{boundary_vanishing_factor, VanishingFactor};

pub(crate) use body::dykstra;
pub(crate) use vanishing::spectral_norm;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("degenerate body: {0}")]
    Degenerate(String),
    #[error("polytope is unbounded")]
    Unbounded,
    #[error("iterative projection did not converge within {iterations} cycles")]
    ProjectionNonConvergence { iterations: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
}
