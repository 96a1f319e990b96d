use std::f64::consts::{PI, TAU};

use serde::Serialize;

use super::body::{ConvexBody, Membership, Shape};
use super::hull::plane_basis;
use super::GeometryError;
use crate::tol::TOL_GEOM;
use crate::Point;

/// A parametrization of (part of) the boundary.
#[derive(Clone, Debug)]
pub enum Chart {
    /// The single boundary point of a half-line.
    Point(Point),
    /// The two endpoints of a bounded interval.
    Endpoints(Point, Point),
    /// `θ ↦ c + r(cos θ, sin θ)`, `θ ∈ [0, 2π)`.
    Circle { center: Point, radius: f64 },
    /// Closed counterclockwise polygon parametrized by arclength.
    Polygon { vertices: Vec<Point>, cumulative: Vec<f64>, perimeter: f64 },
    /// `(θ, φ) ↦ c + r(sin φ cos θ, sin φ sin θ, cos φ)`.
    Sphere { center: Point, radius: f64 },
    /// Planar facet of a 3-D polytope in the frame `origin + a·u + b·v`.
    Facet { halfspace: usize, origin: Point, u: Point, v: Point },
}

impl Chart {
    fn polygon(vertices: Vec<Point>) -> Self {
        let mut cumulative = Vec::with_capacity(vertices.len() + 1);
        let mut s = 0.0;
        cumulative.push(0.0);
        for i in 0..vertices.len() {
            s += (&vertices[(i + 1) % vertices.len()] - &vertices[i]).norm();
            cumulative.push(s);
        }
        Chart::Polygon { vertices, cumulative, perimeter: s }
    }

    /// Parameter period of a closed curve chart.
    pub fn period(&self) -> Option<f64> {
        match self {
            Chart::Circle { .. } => Some(TAU),
            Chart::Polygon { perimeter, .. } => Some(*perimeter),
            _ => None,
        }
    }

    /// Point at parameter `theta` (and `phi` for surface charts).
    pub fn point(&self, theta: f64, phi: f64) -> Point {
        match self {
            Chart::Point(p) => p.clone(),
            Chart::Endpoints(a, b) => {
                if theta < 0.5 {
                    a.clone()
                } else {
                    b.clone()
                }
            }
            Chart::Circle { center, radius } => {
                center + Point::from_vec(vec![radius * theta.cos(), radius * theta.sin()])
            }
            Chart::Polygon { vertices, cumulative, perimeter } => {
                let s = theta.rem_euclid(*perimeter);
                let i = cumulative.partition_point(|&c| c <= s).saturating_sub(1).min(vertices.len() - 1);
                let len = cumulative[i + 1] - cumulative[i];
                let t = if len > 0.0 { (s - cumulative[i]) / len } else { 0.0 };
                &vertices[i] * (1.0 - t) + &vertices[(i + 1) % vertices.len()] * t
            }
            Chart::Sphere { center, radius } => {
                center
                    + Point::from_vec(vec![
                        radius * phi.sin() * theta.cos(),
                        radius * phi.sin() * theta.sin(),
                        radius * phi.cos(),
                    ])
            }
            Chart::Facet { origin, u, v, .. } => origin + u * theta + v * phi,
        }
    }

    /// Derivative of a curve chart with respect to its parameter.
    pub fn tangent(&self, theta: f64) -> Option<Point> {
        match self {
            Chart::Circle { radius, .. } => Some(Point::from_vec(vec![-radius * theta.sin(), radius * theta.cos()])),
            Chart::Polygon { vertices, cumulative, perimeter } => {
                let s = theta.rem_euclid(*perimeter);
                let i = cumulative.partition_point(|&c| c <= s).saturating_sub(1).min(vertices.len() - 1);
                let d = &vertices[(i + 1) % vertices.len()] - &vertices[i];
                let n = d.norm();
                Some(d / n)
            }
            _ => None,
        }
    }

    pub fn is_smooth_curve(&self) -> bool {
        matches!(self, Chart::Circle { .. })
    }
}

#[derive(Clone, Debug)]
pub struct BoundarySample {
    pub chart: usize,
    pub theta: f64,
    pub phi: f64,
    pub x: Point,
}

/// A sampled parametrization of `∂C`.
#[derive(Clone, Debug)]
pub struct BoundaryAtlas {
    pub body: ConvexBody,
    pub charts: Vec<Chart>,
    pub samples: Vec<BoundarySample>,
    pub resolution: usize,
}

impl BoundaryAtlas {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = &Point> {
        self.samples.iter().map(|s| &s.x)
    }

    /// The chart when the boundary is one closed curve (2-D bodies).
    pub fn closed_curve(&self) -> Option<&Chart> {
        match self.charts.as_slice() {
            [c] if c.period().is_some() => Some(c),
            _ => None,
        }
    }

    /// Parameter spacing between consecutive samples of a closed curve.
    pub fn curve_spacing(&self) -> Option<f64> {
        let period = self.closed_curve()?.period()?;
        Some(period / self.samples.len() as f64)
    }

    pub fn same_samples(&self, other: &BoundaryAtlas) -> bool {
        self.samples.len() == other.samples.len() && self.samples.iter().zip(&other.samples).all(|(a, b)| a.x == b.x)
    }
}

/// Builds the boundary atlas of a bounded body (`n ≤ 3`) or a half-line.
/// Sampling is a deterministic grid.
pub fn sample_boundary(body: &ConvexBody, resolution: usize) -> Result<BoundaryAtlas, GeometryError> {
    if resolution < 4 {
        return Err(GeometryError::Unsupported(format!("boundary resolution {resolution} < 4")));
    }
    let dim = body.dim();
    let mut charts = Vec::new();
    let mut samples = Vec::new();
    match (body.shape(), dim) {
        (Shape::HalfLine { origin, .. }, _) => {
            let p = Point::from_element(1, *origin);
            charts.push(Chart::Point(p.clone()));
            samples.push(BoundarySample { chart: 0, theta: 0.0, phi: 0.0, x: p });
        }
        (_, 1) => {
            let (lo, hi) = body.bounding_box().expect("bounded").clone();
            charts.push(Chart::Endpoints(lo.clone(), hi.clone()));
            samples.push(BoundarySample { chart: 0, theta: 0.0, phi: 0.0, x: lo });
            samples.push(BoundarySample { chart: 0, theta: 1.0, phi: 0.0, x: hi });
        }
        (Shape::Ball { center, radius }, 2) => {
            let chart = Chart::Circle { center: center.clone(), radius: *radius };
            for k in 0..resolution {
                let theta = TAU * k as f64 / resolution as f64;
                samples.push(BoundarySample { chart: 0, theta, phi: 0.0, x: chart.point(theta, 0.0) });
            }
            charts.push(chart);
        }
        (_, 2) => {
            let chart = Chart::polygon(polygon_vertices(body));
            let Chart::Polygon { cumulative, vertices, .. } = &chart else { unreachable!() };
            for e in 0..vertices.len() {
                let len = cumulative[e + 1] - cumulative[e];
                for k in 0..resolution {
                    let theta = cumulative[e] + len * k as f64 / resolution as f64;
                    samples.push(BoundarySample { chart: 0, theta, phi: 0.0, x: chart.point(theta, 0.0) });
                }
            }
            charts.push(chart);
        }
        (Shape::Ball { center, radius }, 3) => {
            let chart = Chart::Sphere { center: center.clone(), radius: *radius };
            let rows = resolution;
            for j in 0..=rows {
                let phi = PI * j as f64 / rows as f64;
                let ring = if j == 0 || j == rows { 1 } else { resolution };
                for k in 0..ring {
                    let theta = TAU * k as f64 / resolution as f64;
                    samples.push(BoundarySample { chart: 0, theta, phi, x: chart.point(theta, phi) });
                }
            }
            charts.push(chart);
        }
        (_, 3) => sample_facets(body, resolution, &mut charts, &mut samples),
        _ => return Err(GeometryError::Unsupported(format!("boundary sampling in dimension {dim}"))),
    }
    Ok(BoundaryAtlas { body: body.clone(), charts, samples, resolution })
}

/// Counterclockwise vertices of a 2-D box or polytope.
pub(crate) fn polygon_vertices(body: &ConvexBody) -> Vec<Point> {
    match body.shape() {
        Shape::Box { lo, hi } => {
            vec![lo.clone(), Point::from_vec(vec![hi[0], lo[1]]), hi.clone(), Point::from_vec(vec![lo[0], hi[1]])]
        }
        Shape::Polytope(p) => p.vertices.clone(),
        _ => Vec::new(),
    }
}

fn sample_facets(body: &ConvexBody, resolution: usize, charts: &mut Vec<Chart>, samples: &mut Vec<BoundarySample>) {
    let hs = body.halfspaces().expect("3-D box or polytope");
    let (_, facets) = super::hull::vertices_and_facets(&hs, body.chebyshev_center(), 3);
    for facet in facets {
        let h = &hs[facet.halfspace];
        let (u, v) = plane_basis(&h.normal);
        let origin = &h.normal * h.offset;
        let chart_idx = charts.len();
        let coords = |x: &Point| ((x - &origin).dot(&u), (x - &origin).dot(&v));
        let chart = Chart::Facet { halfspace: facet.halfspace, origin: origin.clone(), u: u.clone(), v: v.clone() };
        let mut push = |x: Point| {
            let (a, b) = coords(&x);
            samples.push(BoundarySample { chart: chart_idx, theta: a, phi: b, x });
        };
        let nv = facet.vertices.len();
        for i in 0..nv {
            let (a, b) = (&facet.vertices[i], &facet.vertices[(i + 1) % nv]);
            for k in 0..resolution {
                let t = k as f64 / resolution as f64;
                push(a * (1.0 - t) + b * t);
            }
        }
        let (mut amin, mut amax, mut bmin, mut bmax) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &facet.vertices {
            let (a, b) = coords(p);
            amin = amin.min(a);
            amax = amax.max(a);
            bmin = bmin.min(b);
            bmax = bmax.max(b);
        }
        let step = (amax - amin).max(bmax - bmin) / resolution as f64;
        let mut a = amin + step / 2.0;
        while a < amax {
            let mut b = bmin + step / 2.0;
            while b < bmax {
                let x = &origin + &u * a + &v * b;
                let inside = hs.iter().enumerate().all(|(k, g)| k == facet.halfspace || g.slack(&x) > TOL_GEOM);
                if inside {
                    push(x);
                }
                b += step;
            }
            a += step;
        }
        charts.push(chart);
    }
}

/// Evidence that `∂C` is not a convex set.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum BoundaryConvexity {
    /// Two boundary points whose midpoint lies in the interior.
    NonConvex { x1: Vec<f64>, x2: Vec<f64>, midpoint: Vec<f64>, margin: f64 },
    /// The boundary is a convex set (half-line).
    ConvexBoundary,
}

impl BoundaryConvexity {
    pub fn is_non_convex(&self) -> bool {
        matches!(self, BoundaryConvexity::NonConvex { .. })
    }
}

pub fn certify_nonconvex_boundary(atlas: &BoundaryAtlas) -> Result<BoundaryConvexity, GeometryError> {
    if atlas.body.is_half_line() {
        return Ok(BoundaryConvexity::ConvexBoundary);
    }
    let stride = atlas.samples.len().div_ceil(400).max(1);
    let pts: Vec<&Point> = atlas.samples.iter().step_by(stride).map(|s| &s.x).collect();
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let mid = (pts[i] + pts[j]) / 2.0;
            let m = atlas.body.signed_distance(&mid);
            if best.is_none_or(|b| m > b.2) {
                best = Some((i, j, m));
            }
        }
    }
    match best {
        Some((i, j, m)) if m > TOL_GEOM => {
            let mid = (pts[i] + pts[j]) / 2.0;
            debug_assert!(matches!(atlas.body.membership(&mid), Membership::Interior { .. }));
            Ok(BoundaryConvexity::NonConvex {
                x1: pts[i].as_slice().to_vec(),
                x2: pts[j].as_slice().to_vec(),
                midpoint: mid.as_slice().to_vec(),
                margin: m,
            })
        }
        _ => Err(GeometryError::Degenerate("no boundary pair with an interior midpoint".into())),
    }
}
