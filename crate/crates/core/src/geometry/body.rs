use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::hull;
use super::GeometryError;
use crate::tol::{TOL_GEOM, TOL_GEOM_ITERATIVE};
use crate::Point;

const DYKSTRA_CYCLE_CAP: usize = 200_000;

/// Result of a membership query.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Membership {
    /// The closed ball of radius `margin` around the point lies in the body.
    Interior {
        margin: f64,
    },
    Boundary,
    Outside,
}

impl Membership {
    pub fn is_interior(&self) -> bool {
        matches!(self, Membership::Interior { .. })
    }

    pub fn margin(&self) -> f64 {
        match self {
            Membership::Interior { margin } => *margin,
            _ => 0.0,
        }
    }
}

/// `{x : ⟨normal, x⟩ ≤ offset}` with a unit normal.
#[derive(Clone, Debug, PartialEq)]
pub struct Halfspace {
    pub normal: Point,
    pub offset: f64,
}

impl Halfspace {
    /// Normalizes `normal` so that slacks are Euclidean distances.
    pub fn new(normal: Point, offset: f64) -> Result<Self, GeometryError> {
        let n = normal.norm();
        if !(n > 0.0) || !offset.is_finite() {
            return Err(GeometryError::Degenerate("halfspace with zero normal".into()));
        }
        Ok(Self { normal: normal / n, offset: offset / n })
    }

    pub fn slack(&self, x: &Point) -> f64 {
        self.offset - self.normal.dot(x)
    }

    fn project(&self, x: &Point) -> Point {
        let s = self.slack(x);
        if s >= 0.0 {
            x.clone()
        } else {
            x + &self.normal * s
        }
    }
}

/// A facet of a 3-D polytope, vertices ordered around its centroid.
#[derive(Clone, Debug)]
pub struct Facet {
    pub halfspace: usize,
    pub vertices: Vec<Point>,
}

#[derive(Clone, Debug)]
pub struct Polytope {
    pub halfspaces: Vec<Halfspace>,
    /// Vertices, available for `n ≤ 3`; counterclockwise in 2-D.
    pub vertices: Vec<Point>,
    /// Only populated in 3-D.
    pub facets: Vec<Facet>,
    pub from_hull: bool,
}

#[derive(Clone, Debug)]
pub enum Shape {
    Ball {
        center: Point,
        radius: f64,
    },
    Box {
        lo: Point,
        hi: Point,
    },
    Polytope(Polytope),
    /// `{origin + t·direction : t ≥ 0}` in `R¹`, with `direction = ±1`.
    HalfLine {
        origin: f64,
        direction: f64,
    },
}

/// A closed convex subset of `R^n` with non-empty interior.
#[derive(Clone, Debug)]
pub struct ConvexBody {
    shape: Shape,
    dim: usize,
    center: Point,
    inradius: f64,
    bbox: Option<(Point, Point)>,
}

impl ConvexBody {
    pub fn ball(center: Point, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(GeometryError::Degenerate(format!("ball radius {radius}")));
        }
        let dim = check_dim(center.len())?;
        let r = Point::from_element(dim, radius);
        Ok(Self {
            bbox: Some((&center - &r, &center + &r)),
            shape: Shape::Ball { center: center.clone(), radius },
            dim,
            center,
            inradius: radius,
        })
    }

    pub fn unit_ball(dim: usize) -> Self {
        Self::ball(Point::zeros(dim), 1.0).expect("unit ball is valid")
    }

    pub fn cuboid(lo: Point, hi: Point) -> Result<Self, GeometryError> {
        if lo.len() != hi.len() {
            return Err(GeometryError::DimensionMismatch { expected: lo.len(), found: hi.len() });
        }
        let dim = check_dim(lo.len())?;
        if lo.iter().zip(hi.iter()).any(|(l, h)| !(l < h)) {
            return Err(GeometryError::Degenerate("box needs lo < hi componentwise".into()));
        }
        let center = (&lo + &hi) / 2.0;
        let inradius = (&hi - &lo).min() / 2.0;
        Ok(Self { bbox: Some((lo.clone(), hi.clone())), shape: Shape::Box { lo, hi }, dim, center, inradius })
    }

    /// Intersection of halfspaces; must be bounded with non-empty interior.
    pub fn polytope(halfspaces: Vec<Halfspace>) -> Result<Self, GeometryError> {
        Self::polytope_inner(halfspaces, false)
    }

    /// Convex hull of a finite point set (`n = 2` or `n = 3`), converted once
    /// to its halfspace representation.
    pub fn hull(points: &[Point]) -> Result<Self, GeometryError> {
        let halfspaces = hull::halfspaces_of_hull(points)?;
        Self::polytope_inner(halfspaces, true)
    }

    fn polytope_inner(halfspaces: Vec<Halfspace>, from_hull: bool) -> Result<Self, GeometryError> {
        let first =
            halfspaces.first().ok_or_else(|| GeometryError::Degenerate("polytope without halfspaces".into()))?;
        let dim = check_dim(first.normal.len())?;
        if let Some(h) = halfspaces.iter().find(|h| h.normal.len() != dim) {
            return Err(GeometryError::DimensionMismatch { expected: dim, found: h.normal.len() });
        }
        let halfspaces = dedup_halfspaces(halfspaces);
        let (center, inradius) = chebyshev_center(&halfspaces, dim)?;
        if !(inradius > TOL_GEOM) {
            return Err(GeometryError::Degenerate(format!("polytope interior radius {inradius:e} is not positive")));
        }
        let (vertices, facets) =
            if dim <= 3 { hull::vertices_and_facets(&halfspaces, &center, dim) } else { (Vec::new(), Vec::new()) };
        let bbox = if vertices.is_empty() { lp_bounding_box(&halfspaces, dim)? } else { vertex_bbox(&vertices) };
        Ok(Self {
            shape: Shape::Polytope(Polytope { halfspaces, vertices, facets, from_hull }),
            dim,
            center,
            inradius,
            bbox: Some(bbox),
        })
    }

    pub fn half_line(origin: f64, direction: f64) -> Result<Self, GeometryError> {
        if direction != 1.0 && direction != -1.0 {
            return Err(GeometryError::Degenerate("half-line direction must be ±1".into()));
        }
        if !origin.is_finite() {
            return Err(GeometryError::Degenerate("half-line origin must be finite".into()));
        }
        Ok(Self {
            shape: Shape::HalfLine { origin, direction },
            dim: 1,
            center: Point::from_element(1, origin + direction),
            inradius: f64::INFINITY,
            bbox: None,
        })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self.shape, Shape::HalfLine { .. })
    }

    pub fn is_half_line(&self) -> bool {
        matches!(self.shape, Shape::HalfLine { .. })
    }

    /// Center of the largest inscribed ball.
    pub fn chebyshev_center(&self) -> &Point {
        &self.center
    }

    pub fn inradius(&self) -> f64 {
        self.inradius
    }

    pub fn bounding_box(&self) -> Option<&(Point, Point)> {
        self.bbox.as_ref()
    }

    pub fn diameter(&self) -> f64 {
        match &self.shape {
            Shape::Ball { radius, .. } => 2.0 * radius,
            Shape::Box { lo, hi } => (hi - lo).norm(),
            Shape::Polytope(p) if !p.vertices.is_empty() => {
                let mut d: f64 = 0.0;
                for (i, a) in p.vertices.iter().enumerate() {
                    for b in &p.vertices[i + 1..] {
                        d = d.max((a - b).norm());
                    }
                }
                d
            }
            Shape::Polytope(_) => {
                let (lo, hi) = self.bbox.as_ref().expect("polytopes are bounded");
                (hi - lo).norm()
            }
            Shape::HalfLine { .. } => f64::INFINITY,
        }
    }

    /// Halfspace representation of boxes and polytopes.
    pub fn halfspaces(&self) -> Option<Vec<Halfspace>> {
        match &self.shape {
            Shape::Box { lo, hi } => {
                let mut hs = Vec::with_capacity(2 * self.dim);
                for i in 0..self.dim {
                    let mut e = Point::zeros(self.dim);
                    e[i] = 1.0;
                    hs.push(Halfspace { normal: -&e, offset: -lo[i] });
                    hs.push(Halfspace { normal: e, offset: hi[i] });
                }
                Some(hs)
            }
            Shape::Polytope(p) => Some(p.halfspaces.clone()),
            _ => None,
        }
    }

    /// Tolerance under which a projected point counts as inside.
    pub fn projection_tol(&self) -> f64 {
        match self.shape {
            Shape::Polytope(_) => TOL_GEOM_ITERATIVE,
            _ => TOL_GEOM,
        }
    }

    fn check(&self, x: &Point) -> Result<(), GeometryError> {
        if x.len() != self.dim {
            Err(GeometryError::DimensionMismatch { expected: self.dim, found: x.len() })
        } else {
            Ok(())
        }
    }

    /// Positive inside, zero on the boundary, negative outside. Exact
    /// distance to the boundary for points inside the body.
    pub fn signed_distance(&self, x: &Point) -> f64 {
        match &self.shape {
            Shape::Ball { center, radius } => radius - (x - center).norm(),
            Shape::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .map(|(xi, (l, h))| (xi - l).min(h - xi))
                .fold(f64::INFINITY, f64::min),
            Shape::Polytope(p) => p.halfspaces.iter().map(|h| h.slack(x)).fold(f64::INFINITY, f64::min),
            Shape::HalfLine { origin, direction } => direction * (x[0] - origin),
        }
    }

    pub fn contains(&self, x: &Point) -> Result<Membership, GeometryError> {
        self.check(x)?;
        Ok(self.membership(x))
    }

    pub(crate) fn membership(&self, x: &Point) -> Membership {
        let sd = self.signed_distance(x);
        if sd > TOL_GEOM {
            Membership::Interior { margin: sd }
        } else if sd >= -TOL_GEOM {
            Membership::Boundary
        } else {
            Membership::Outside
        }
    }

    /// Euclidean nearest point of the body.
    pub fn project(&self, x: &Point) -> Result<Point, GeometryError> {
        self.check(x)?;
        match &self.shape {
            Shape::Ball { center, radius } => {
                let d = x - center;
                let n = d.norm();
                Ok(if n <= *radius { x.clone() } else { center + d * (radius / n) })
            }
            Shape::Box { lo, hi } => {
                Ok(Point::from_iterator(self.dim, (0..self.dim).map(|i| x[i].clamp(lo[i], hi[i]))))
            }
            Shape::HalfLine { origin, direction } => {
                let t = (direction * (x[0] - origin)).max(0.0);
                Ok(Point::from_element(1, origin + direction * t))
            }
            Shape::Polytope(p) if self.dim == 2 => Ok(project_polygon(p, x)),
            Shape::Polytope(p) => dykstra(&p.halfspaces, None, x),
        }
    }

    /// Uniform-ish interior sample; exact uniform for balls and boxes.
    pub(crate) fn sample_interior(&self, rng: &mut impl Rng) -> Point {
        match &self.shape {
            Shape::Ball { center, radius } => {
                let u = crate::rng::unit_vector(rng, self.dim);
                let r = radius * rng.random_range(0.0f64..1.0).powf(1.0 / self.dim as f64);
                center + u * r
            }
            Shape::Box { lo, hi } => {
                Point::from_iterator(self.dim, (0..self.dim).map(|i| rng.random_range(lo[i]..hi[i])))
            }
            Shape::HalfLine { origin, direction } => {
                Point::from_element(1, origin + direction * rng.random_range(0.0..2.0))
            }
            Shape::Polytope(_) => {
                let (lo, hi) = self.bbox.as_ref().expect("polytopes are bounded");
                let y = Point::from_iterator(self.dim, (0..self.dim).map(|i| rng.random_range(lo[i]..hi[i])));
                let mut s = 1.0;
                loop {
                    let x = &self.center + (&y - &self.center) * s;
                    if self.signed_distance(&x) > TOL_GEOM || s < 1e-6 {
                        return x;
                    }
                    s *= 0.5;
                }
            }
        }
    }

    /// Tensor grid over the bounding box restricted to points strictly
    /// inside the body. Only for bounded bodies with `n ≤ 3`.
    pub fn interior_grid(&self, per_axis: usize) -> Vec<Point> {
        self.box_grid(per_axis).into_iter().filter(|x| self.signed_distance(x) > TOL_GEOM).collect()
    }

    /// Full tensor grid over the bounding box (`n ≤ 3`).
    pub fn box_grid(&self, per_axis: usize) -> Vec<Point> {
        let Some((lo, hi)) = self.bbox.as_ref() else {
            return Vec::new();
        };
        if self.dim > 3 || per_axis < 2 {
            return Vec::new();
        }
        let total = per_axis.pow(self.dim as u32);
        (0..total)
            .map(|mut k| {
                Point::from_iterator(
                    self.dim,
                    (0..self.dim).map(|i| {
                        let j = k % per_axis;
                        k /= per_axis;
                        lo[i] + (hi[i] - lo[i]) * j as f64 / (per_axis - 1) as f64
                    }),
                )
            })
            .collect()
    }
}

fn check_dim(dim: usize) -> Result<usize, GeometryError> {
    if dim == 0 || dim > 16 {
        Err(GeometryError::Unsupported(format!("dimension {dim} (supported: 1..=16)")))
    } else {
        Ok(dim)
    }
}

fn dedup_halfspaces(hs: Vec<Halfspace>) -> Vec<Halfspace> {
    let mut out: Vec<Halfspace> = Vec::with_capacity(hs.len());
    for h in hs {
        let dup = out.iter().any(|o| (&o.normal - &h.normal).norm() < 1e-12 && (o.offset - h.offset).abs() < 1e-12);
        if !dup {
            out.push(h);
        }
    }
    out
}

/// Maximizes `r` subject to `⟨a_i, c⟩ + r ≤ b_i` (unit normals).
fn chebyshev_center(hs: &[Halfspace], dim: usize) -> Result<(Point, f64), GeometryError> {
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let c: Vec<_> = (0..dim).map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY))).collect();
    let r = lp.add_var(1.0, (0.0, f64::INFINITY));
    for h in hs {
        let mut row: Vec<_> = c.iter().zip(h.normal.iter()).map(|(&v, &a)| (v, a)).collect();
        row.push((r, 1.0));
        lp.add_constraint(row.as_slice(), ComparisonOp::Le, h.offset);
    }
    let sol = lp.solve().map_err(|e| match e {
        minilp::Error::Unbounded => GeometryError::Unbounded,
        minilp::Error::Infeasible => GeometryError::Degenerate("empty polytope".into()),
    })?;
    Ok((Point::from_iterator(dim, c.iter().map(|&v| sol[v])), sol[r]))
}

fn lp_bounding_box(hs: &[Halfspace], dim: usize) -> Result<(Point, Point), GeometryError> {
    let mut lo = Point::zeros(dim);
    let mut hi = Point::zeros(dim);
    for i in 0..dim {
        for (dir, slot) in [(OptimizationDirection::Minimize, 0), (OptimizationDirection::Maximize, 1)] {
            let mut lp = Problem::new(dir);
            let vars: Vec<_> = (0..dim)
                .map(|j| lp.add_var(if i == j { 1.0 } else { 0.0 }, (f64::NEG_INFINITY, f64::INFINITY)))
                .collect();
            for h in hs {
                let row: Vec<_> = vars.iter().zip(h.normal.iter()).map(|(&v, &a)| (v, a)).collect();
                lp.add_constraint(row.as_slice(), ComparisonOp::Le, h.offset);
            }
            let sol = lp.solve().map_err(|_| GeometryError::Unbounded)?;
            if slot == 0 {
                lo[i] = sol.objective();
            } else {
                hi[i] = sol.objective();
            }
        }
    }
    Ok((lo, hi))
}

fn vertex_bbox(vertices: &[Point]) -> (Point, Point) {
    let dim = vertices[0].len();
    let mut lo = Point::from_element(dim, f64::INFINITY);
    let mut hi = Point::from_element(dim, f64::NEG_INFINITY);
    for v in vertices {
        for i in 0..dim {
            lo[i] = lo[i].min(v[i]);
            hi[i] = hi[i].max(v[i]);
        }
    }
    (lo, hi)
}

/// Dykstra's alternating projections onto an intersection of halfspaces,
/// optionally also onto the hyperplane `⟨a, x⟩ = b`.
/// Exact projection onto a convex polygon: the point itself when inside,
/// else the nearest point over the edges.
fn project_polygon(p: &Polytope, x: &Point) -> Point {
    if p.halfspaces.iter().all(|h| h.slack(x) >= 0.0) {
        return x.clone();
    }
    let n = p.vertices.len();
    let mut best = (f64::INFINITY, x.clone());
    for i in 0..n {
        let (a, b) = (&p.vertices[i], &p.vertices[(i + 1) % n]);
        let d = b - a;
        let t = ((x - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
        let y = a + d * t;
        let dist = (x - &y).norm_squared();
        if dist < best.0 {
            best = (dist, y);
        }
    }
    best.1
}

pub(crate) fn dykstra(hs: &[Halfspace], plane: Option<&Halfspace>, x: &Point) -> Result<Point, GeometryError> {
    let violated =
        |y: &Point| hs.iter().map(|h| -h.slack(y)).fold(0.0f64, f64::max) + plane.map_or(0.0, |p| p.slack(y).abs());
    if violated(x) <= 0.0 {
        return Ok(x.clone());
    }
    let sets = hs.len() + usize::from(plane.is_some());
    let mut y = x.clone();
    let mut incr = vec![Point::zeros(x.len()); sets];
    let scale = 1.0 + x.norm();
    for cycle in 0..DYKSTRA_CYCLE_CAP {
        let start = y.clone();
        for (k, p) in incr.iter_mut().enumerate() {
            let z = &y + &*p;
            let next = match hs.get(k) {
                Some(h) => h.project(&z),
                None => {
                    let pl = plane.expect("extra set is the plane");
                    &z + &pl.normal * pl.slack(&z)
                }
            };
            *p = z - &next;
            y = next;
        }
        let moved = (&y - &start).norm();
        if moved <= 1e-15 * scale && violated(&y) <= 1e-12 * scale {
            return Ok(y);
        }
        if cycle > 50 && moved <= 1e-13 * scale && violated(&y) <= TOL_GEOM_ITERATIVE {
            return Ok(y);
        }
    }
    Err(GeometryError::ProjectionNonConvergence { iterations: DYKSTRA_CYCLE_CAP })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn tri() -> ConvexBody {
        ConvexBody::hull(&[dvector![0.0, 0.0], dvector![1.0, 0.0], dvector![0.0, 1.0]]).unwrap()
    }

    #[test]
    fn ball_membership() {
        let b = ConvexBody::unit_ball(2);
        assert_eq!(b.contains(&dvector![0.0, 0.0]).unwrap(), Membership::Interior { margin: 1.0 });
        assert_eq!(b.contains(&dvector![1.0, 0.0]).unwrap(), Membership::Boundary);
        assert_eq!(b.contains(&dvector![2.0, 0.0]).unwrap(), Membership::Outside);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let b = ConvexBody::unit_ball(2);
        assert!(matches!(
            b.contains(&dvector![0.0, 0.0, 0.0]),
            Err(GeometryError::DimensionMismatch { expected: 2, found: 3 })
        ));
        assert!(b.project(&dvector![1.0]).is_err());
    }

    #[test]
    fn closed_form_projections() {
        let b = ConvexBody::unit_ball(2);
        assert_eq!(b.project(&dvector![2.0, 0.0]).unwrap(), dvector![1.0, 0.0]);
        let bx = ConvexBody::cuboid(dvector![0.0, 0.0], dvector![1.0, 1.0]).unwrap();
        assert_eq!(bx.project(&dvector![2.0, -1.0]).unwrap(), dvector![1.0, 0.0]);
        let hl = ConvexBody::half_line(0.0, 1.0).unwrap();
        assert_eq!(hl.project(&dvector![-3.0]).unwrap(), dvector![0.0]);
    }

    #[test]
    fn triangle_projection_matches_grid_search() {
        // Brute force: nearest point of a fine grid over the triangle.
        let target = dvector![1.0, 1.0];
        let n = 2000;
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=n {
            for j in 0..=(n - i) {
                let (u, v) = (i as f64 / n as f64, j as f64 / n as f64);
                let d = (u - 1.0).powi(2) + (v - 1.0).powi(2);
                if d < best.0 {
                    best = (d, u, v);
                }
            }
        }
        assert!((best.1 - 0.5).abs() <= 1e-3 && (best.2 - 0.5).abs() <= 1e-3);
        let p = tri().project(&target).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-7 && (p[1] - 0.5).abs() < 1e-7, "{p}");
    }

    #[test]
    fn degenerate_bodies_are_rejected() {
        assert!(ConvexBody::ball(dvector![0.0, 0.0], 0.0).is_err());
        assert!(ConvexBody::cuboid(dvector![0.0, 1.0], dvector![1.0, 1.0]).is_err());
        assert!(ConvexBody::hull(&[dvector![0.0, 0.0], dvector![1.0, 1.0], dvector![2.0, 2.0]]).is_err());
        let open = vec![Halfspace::new(dvector![1.0, 0.0], 1.0).unwrap()];
        assert!(matches!(ConvexBody::polytope(open), Err(GeometryError::Unbounded)));
        assert!(ConvexBody::half_line(0.0, 0.5).is_err());
    }

    #[test]
    fn chebyshev_center_of_triangle() {
        let t = tri();
        let r = 1.0 / (2.0 + 2f64.sqrt());
        assert!((t.inradius() - r).abs() < 1e-9);
        assert!((t.chebyshev_center()[0] - r).abs() < 1e-9);
        assert_eq!(t.bounding_box().unwrap().1, dvector![1.0, 1.0]);
    }

    #[test]
    fn polytope_in_higher_dimension() {
        let dim = 5;
        let mut hs = Vec::new();
        for i in 0..dim {
            let mut e = Point::zeros(dim);
            e[i] = 1.0;
            hs.push(Halfspace::new(e.clone(), 1.0).unwrap());
            hs.push(Halfspace::new(-e, 1.0).unwrap());
        }
        let cube = ConvexBody::polytope(hs).unwrap();
        assert!((cube.inradius() - 1.0).abs() < 1e-9);
        let p = cube.project(&Point::from_element(dim, 3.0)).unwrap();
        assert!((p - Point::from_element(dim, 1.0)).norm() < 1e-7);
    }

    #[test]
    fn interior_samples_are_interior() {
        let mut rng = crate::rng::seeded(3);
        for body in [ConvexBody::unit_ball(3), tri(), ConvexBody::half_line(1.0, -1.0).unwrap()] {
            for _ in 0..200 {
                let x = body.sample_interior(&mut rng);
                assert!(body.contains(&x).unwrap().is_interior());
            }
        }
    }
}
