//! Brute-force grid minimizer used as an independent reference for the
//! iterative solvers.

use rayon::prelude::*;
use serde::Serialize;

use crate::functions::SmoothFn;
use crate::geometry::{sample_boundary, ConvexBody, GeometryError};
use crate::tol::TOL_GEOM;
use crate::Point;

#[derive(Clone, Debug, Serialize)]
pub struct GridArgmin {
    #[serde(serialize_with = "crate::ser::point")]
    pub x: Point,
    pub value: f64,
    /// Largest per-axis grid step.
    pub spacing: f64,
    /// Grid points inside the body.
    pub points: usize,
}

/// Minimum of `f` over the tensor grid (`per_axis` points per axis) of the
/// bounding box, restricted to the closed body. Bounded bodies, `n ≤ 3`.
/// Planar bodies also get boundary samples no coarser than the grid, since
/// a curved boundary otherwise falls between grid points.
pub fn grid_argmin(f: &dyn SmoothFn, body: &ConvexBody, per_axis: usize) -> Result<GridArgmin, GeometryError> {
    let Some((lo, hi)) = body.bounding_box() else {
        return Err(GeometryError::Unsupported("grid oracle on an unbounded body".into()));
    };
    if body.dim() > 3 || per_axis < 2 {
        return Err(GeometryError::Unsupported(format!(
            "grid oracle with {per_axis} points per axis in dimension {}",
            body.dim()
        )));
    }
    let spacing = (hi - lo).amax() / (per_axis - 1) as f64;
    let mut grid = body.box_grid(per_axis);
    if body.dim() == 2 {
        let atlas = sample_boundary(body, 4 * per_axis)?;
        grid.extend(atlas.samples.into_iter().map(|s| s.x));
    }
    let best = grid
        .par_iter()
        .enumerate()
        .filter(|(_, x)| body.signed_distance(x) >= -TOL_GEOM)
        .map(|(i, x)| (f.value(x), i))
        .filter(|(v, _)| !v.is_nan())
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let points = grid.iter().filter(|x| body.signed_distance(x) >= -TOL_GEOM).count();
    let (value, i) = best.ok_or_else(|| GeometryError::Degenerate("empty grid".into()))?;
    Ok(GridArgmin { x: grid[i].clone(), value, spacing, points })
}
