use nalgebra::DMatrix;

use super::body::{ConvexBody, Halfspace, Shape};
use super::GeometryError;
use crate::functions::SmoothFn;
use crate::Point;

/// A smooth `w` with `w = 0` on `∂C`, `w > 0` on `int C`.
///
/// Balls use `r² − ‖x − c‖²`; boxes and polytopes use the product of the
/// facet slacks `Π (bⱼ − ⟨aⱼ, x⟩)`.
#[derive(Clone, Debug)]
pub struct VanishingFactor {
    kind: Kind,
    dim: usize,
    hessian_bound: f64,
}

#[derive(Clone, Debug)]
enum Kind {
    Ball { center: Point, r2: f64 },
    Slacks(Vec<Halfspace>),
}

impl VanishingFactor {
    /// Upper bound on the Hessian spectral norm over the body.
    pub fn hessian_bound(&self) -> f64 {
        self.hessian_bound
    }
}

pub fn boundary_vanishing_factor(body: &ConvexBody) -> Result<VanishingFactor, GeometryError> {
    let dim = body.dim();
    let kind = match body.shape() {
        Shape::Ball { center, radius } => {
            return Ok(VanishingFactor {
                kind: Kind::Ball { center: center.clone(), r2: radius * radius },
                dim,
                hessian_bound: 2.0,
            })
        }
        Shape::HalfLine { .. } => {
            return Err(GeometryError::Unsupported("boundary-vanishing factor of a half-line".into()))
        }
        _ => Kind::Slacks(body.halfspaces().expect("box or polytope")),
    };
    let mut w = VanishingFactor { kind, dim, hessian_bound: 0.0 };
    let mut probes = body.box_grid(if dim <= 2 { 41 } else { 13 });
    if let Shape::Polytope(p) = body.shape() {
        probes.extend(p.vertices.iter().cloned());
    }
    if probes.is_empty() {
        let mut rng = crate::rng::seeded(17);
        probes = (0..4000).map(|_| body.sample_interior(&mut rng)).collect();
    }
    w.hessian_bound = probes
        .iter()
        .filter(|x| body.signed_distance(x) >= -1e-9)
        .map(|x| spectral_norm(&w.hessian(x).expect("analytic")))
        .fold(0.0, f64::max);
    Ok(w)
}

pub(crate) fn spectral_norm(h: &DMatrix<f64>) -> f64 {
    h.symmetric_eigenvalues().amax()
}

impl SmoothFn for VanishingFactor {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Point) -> f64 {
        match &self.kind {
            Kind::Ball { center, r2 } => r2 - (x - center).norm_squared(),
            Kind::Slacks(hs) => hs.iter().map(|h| h.slack(x)).product(),
        }
    }

    fn gradient(&self, x: &Point) -> Point {
        match &self.kind {
            Kind::Ball { center, .. } => (x - center) * -2.0,
            Kind::Slacks(hs) => {
                let s: Vec<f64> = hs.iter().map(|h| h.slack(x)).collect();
                hs.iter().enumerate().fold(Point::zeros(self.dim), |acc, (j, h)| {
                    let others: f64 = s.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, v)| v).product();
                    acc - &h.normal * others
                })
            }
        }
    }

    fn hessian(&self, x: &Point) -> Option<DMatrix<f64>> {
        Some(match &self.kind {
            Kind::Ball { .. } => DMatrix::identity(self.dim, self.dim) * -2.0,
            Kind::Slacks(hs) => {
                let s: Vec<f64> = hs.iter().map(|h| h.slack(x)).collect();
                let mut out = DMatrix::zeros(self.dim, self.dim);
                for j in 0..hs.len() {
                    for k in 0..hs.len() {
                        if j == k {
                            continue;
                        }
                        let rest: f64 =
                            s.iter().enumerate().filter(|(l, _)| *l != j && *l != k).map(|(_, v)| v).product();
                        out += &hs[j].normal * hs[k].normal.transpose() * rest;
                    }
                }
                out
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_boundary;
    use nalgebra::dvector;

    #[test]
    fn ball_factor() {
        let w = boundary_vanishing_factor(&ConvexBody::unit_ball(2)).unwrap();
        assert_eq!(w.value(&dvector![0.0, 0.0]), 1.0);
        assert_eq!(w.value(&dvector![1.0, 0.0]), 0.0);
        assert_eq!(w.hessian(&dvector![0.3, 0.1]).unwrap(), DMatrix::identity(2, 2) * -2.0);
        assert_eq!(w.hessian_bound(), 2.0);
    }

    #[test]
    fn box_factor_is_slack_product() {
        let b = ConvexBody::cuboid(dvector![0.0, 0.0], dvector![1.0, 1.0]).unwrap();
        let w = boundary_vanishing_factor(&b).unwrap();
        assert!((w.value(&dvector![0.5, 0.5]) - 1.0 / 16.0).abs() < 1e-15);
        let x = dvector![0.3, 0.8];
        let exact = x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]);
        assert!((w.value(&x) - exact).abs() < 1e-15);
        // ∂²w/∂x₁∂x₂ = (1 − 2x₁)(1 − 2x₂)
        let h = w.hessian(&x).unwrap();
        assert!((h[(0, 1)] - (1.0 - 0.6) * (1.0 - 1.6)).abs() < 1e-14);
        assert!((h[(0, 0)] - (-2.0 * x[1] * (1.0 - x[1]))).abs() < 1e-14);
        assert!(w.hessian_bound() > 0.0);
    }

    #[test]
    fn vanishes_on_atlas_and_is_nonnegative_inside() {
        let tri = ConvexBody::hull(&[dvector![0.0, 0.0], dvector![2.0, 0.0], dvector![0.0, 1.0]]).unwrap();
        for body in [ConvexBody::unit_ball(2), tri] {
            let w = boundary_vanishing_factor(&body).unwrap();
            for s in &sample_boundary(&body, 64).unwrap().samples {
                assert!(w.value(&s.x).abs() <= 1e-12);
            }
            for x in body.interior_grid(51) {
                assert!(w.value(&x) > 0.0);
            }
        }
    }

    #[test]
    fn half_line_is_rejected() {
        assert!(boundary_vanishing_factor(&ConvexBody::half_line(0.0, 1.0).unwrap()).is_err());
    }
}
