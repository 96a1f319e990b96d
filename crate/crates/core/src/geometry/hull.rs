//! Halfspace conversion for point hulls and vertex enumeration for small
//! polytopes. Dimensions above 3 are out of scope here.

use nalgebra::{Matrix3, Vector3};

use super::body::{Facet, Halfspace};
use super::GeometryError;
use crate::Point;

const EPS: f64 = 1e-10;

pub(crate) fn halfspaces_of_hull(points: &[Point]) -> Result<Vec<Halfspace>, GeometryError> {
    let dim = points
        .first()
        .map(|p| p.len())
        .ok_or_else(|| GeometryError::Degenerate("hull of an empty point set".into()))?;
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(GeometryError::DimensionMismatch { expected: dim, found: p.len() });
    }
    match dim {
        1 => {
            let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            Ok(vec![
                Halfspace::new(Point::from_element(1, 1.0), hi)?,
                Halfspace::new(Point::from_element(1, -1.0), -lo)?,
            ])
        }
        2 => {
            let ring = gift_wrap(points)?;
            (0..ring.len())
                .map(|i| {
                    let a = &ring[i];
                    let b = &ring[(i + 1) % ring.len()];
                    // Counterclockwise ring: the outward normal is the edge rotated clockwise.
                    let n = Point::from_vec(vec![b[1] - a[1], a[0] - b[0]]);
                    let off = n.dot(a);
                    Halfspace::new(n, off)
                })
                .collect()
        }
        3 => facet_planes_3d(points),
        _ => Err(GeometryError::Unsupported(format!("hull in dimension {dim}"))),
    }
}

fn cross2(o: &Point, a: &Point, b: &Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Jarvis march; returns the hull vertices counterclockwise.
fn gift_wrap(points: &[Point]) -> Result<Vec<Point>, GeometryError> {
    let start = points
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])))
        .map(|(i, _)| i)
        .expect("non-empty");
    let mut ring = vec![start];
    let mut current = start;
    loop {
        let mut next = if current == 0 { 1 % points.len() } else { 0 };
        for (j, p) in points.iter().enumerate() {
            if j == current {
                continue;
            }
            let turn = cross2(&points[current], &points[next], p);
            let farther = (p - &points[current]).norm() > (&points[next] - &points[current]).norm();
            if turn < -EPS || (turn.abs() <= EPS && farther) {
                next = j;
            }
        }
        if next == start || ring.len() > points.len() {
            break;
        }
        ring.push(next);
        current = next;
    }
    if ring.len() < 3 {
        return Err(GeometryError::Degenerate("hull points are collinear".into()));
    }
    Ok(ring.into_iter().map(|i| points[i].clone()).collect())
}

/// Enumerates supporting planes through point triples. Cubic in the number
/// of points times a linear check, fine for the small hulls used here.
fn facet_planes_3d(points: &[Point]) -> Result<Vec<Halfspace>, GeometryError> {
    let v: Vec<Vector3<f64>> = points.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect();
    let mut planes: Vec<Halfspace> = Vec::new();
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            for k in j + 1..v.len() {
                let n = (v[j] - v[i]).cross(&(v[k] - v[i]));
                if n.norm() < EPS {
                    continue;
                }
                let n = n.normalize();
                let off = n.dot(&v[i]);
                let (mut above, mut below) = (false, false);
                for p in &v {
                    let s = n.dot(p) - off;
                    above |= s > EPS;
                    below |= s < -EPS;
                }
                let n = match (above, below) {
                    (true, true) | (false, false) => continue,
                    (false, true) => n,
                    (true, false) => -n,
                };
                let h = Halfspace::new(Point::from_column_slice(n.as_slice()), n.dot(&v[i]))?;
                if !planes.iter().any(|q| (&q.normal - &h.normal).norm() < 1e-9 && (q.offset - h.offset).abs() < 1e-9) {
                    planes.push(h);
                }
            }
        }
    }
    if planes.len() < 4 {
        return Err(GeometryError::Degenerate("hull points are coplanar".into()));
    }
    Ok(planes)
}

/// Vertices (2-D: counterclockwise) and, in 3-D, ordered facets.
pub(crate) fn vertices_and_facets(hs: &[Halfspace], center: &Point, dim: usize) -> (Vec<Point>, Vec<Facet>) {
    let feasible = |x: &Point| hs.iter().all(|h| h.slack(x) >= -1e-9);
    let mut verts: Vec<Point> = Vec::new();
    let mut push = |x: Point| {
        if feasible(&x) && !verts.iter().any(|v| (v - &x).norm() < 1e-9) {
            verts.push(x);
        }
    };
    match dim {
        1 => {
            for h in hs {
                push(Point::from_element(1, h.offset / h.normal[0]));
            }
        }
        2 => {
            for i in 0..hs.len() {
                for j in i + 1..hs.len() {
                    let (a, b) = (&hs[i], &hs[j]);
                    let det = a.normal[0] * b.normal[1] - a.normal[1] * b.normal[0];
                    if det.abs() < 1e-12 {
                        continue;
                    }
                    let x = (a.offset * b.normal[1] - b.offset * a.normal[1]) / det;
                    let y = (a.normal[0] * b.offset - b.normal[0] * a.offset) / det;
                    push(Point::from_vec(vec![x, y]));
                }
            }
        }
        3 => {
            for i in 0..hs.len() {
                for j in i + 1..hs.len() {
                    for k in j + 1..hs.len() {
                        let m = Matrix3::from_rows(&[
                            hs[i].normal.transpose().fixed_columns::<3>(0).into_owned(),
                            hs[j].normal.transpose().fixed_columns::<3>(0).into_owned(),
                            hs[k].normal.transpose().fixed_columns::<3>(0).into_owned(),
                        ]);
                        if m.determinant().abs() < 1e-12 {
                            continue;
                        }
                        if let Some(inv) = m.try_inverse() {
                            let x = inv * Vector3::new(hs[i].offset, hs[j].offset, hs[k].offset);
                            push(Point::from_column_slice(x.as_slice()));
                        }
                    }
                }
            }
        }
        _ => {}
    }
    if dim == 2 {
        verts.sort_by(|a, b| {
            let ta = (a[1] - center[1]).atan2(a[0] - center[0]);
            let tb = (b[1] - center[1]).atan2(b[0] - center[0]);
            ta.total_cmp(&tb)
        });
    }
    let facets = if dim == 3 {
        hs.iter()
            .enumerate()
            .filter_map(|(idx, h)| {
                let on: Vec<Point> = verts.iter().filter(|v| h.slack(v).abs() <= 1e-9).cloned().collect();
                (on.len() >= 3).then(|| Facet { halfspace: idx, vertices: order_in_plane(on, &h.normal) })
            })
            .collect()
    } else {
        Vec::new()
    };
    (verts, facets)
}

/// Orthonormal basis `(u, v)` of the plane with the given unit normal.
pub(crate) fn plane_basis(normal: &Point) -> (Point, Point) {
    let n = Vector3::new(normal[0], normal[1], normal[2]);
    let seed = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = (seed - n * n.dot(&seed)).normalize();
    let v = n.cross(&u);
    (Point::from_column_slice(u.as_slice()), Point::from_column_slice(v.as_slice()))
}

fn order_in_plane(mut pts: Vec<Point>, normal: &Point) -> Vec<Point> {
    let c = pts.iter().fold(Point::zeros(3), |acc, p| acc + p) / pts.len() as f64;
    let (u, v) = plane_basis(normal);
    pts.sort_by(|a, b| {
        let (da, db) = (a - &c, b - &c);
        da.dot(&v).atan2(da.dot(&u)).total_cmp(&db.dot(&v).atan2(db.dot(&u)))
    });
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn gift_wrap_drops_interior_points() {
        let pts = vec![
            dvector![0.0, 0.0],
            dvector![2.0, 0.0],
            dvector![1.0, 0.5],
            dvector![2.0, 2.0],
            dvector![0.0, 2.0],
            dvector![1.0, 0.0],
        ];
        let ring = gift_wrap(&pts).unwrap();
        assert_eq!(ring.len(), 4);
        let hs = halfspaces_of_hull(&pts).unwrap();
        for p in &pts {
            assert!(hs.iter().all(|h| h.slack(p) >= -1e-12));
        }
    }

    #[test]
    fn tetrahedron_has_four_facets() {
        let pts = vec![
            dvector![0.0, 0.0, 0.0],
            dvector![1.0, 0.0, 0.0],
            dvector![0.0, 1.0, 0.0],
            dvector![0.0, 0.0, 1.0],
            dvector![0.1, 0.1, 0.1],
        ];
        let hs = facet_planes_3d(&pts).unwrap();
        assert_eq!(hs.len(), 4);
        let center = dvector![0.2, 0.2, 0.2];
        let (v, f) = vertices_and_facets(&hs, &center, 3);
        assert_eq!(v.len(), 4);
        assert_eq!(f.len(), 4);
        assert!(f.iter().all(|f| f.vertices.len() == 3));
    }
}
