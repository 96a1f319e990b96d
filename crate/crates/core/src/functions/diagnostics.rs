use rand::Rng;
use serde::Serialize;

use super::{FunctionError, SmoothFn};
use crate::geometry::ConvexBody;
use crate::rng::{seeded, unit_vector};
use crate::Point;

/// Max over points and coordinates of
/// `|central difference − analytic| / (1 + |analytic|)`.
pub fn finite_diff_check(
    f: &dyn SmoothFn,
    domain: Option<&ConvexBody>,
    points: &[Point],
    h: f64,
) -> Result<f64, FunctionError> {
    if !(h > 0.0) {
        return Err(FunctionError::InvalidParams(format!("step h = {h}")));
    }
    let mut worst: f64 = 0.0;
    for x in points {
        if let Some(body) = domain {
            let margin = body.contains(x)?.margin();
            if margin < h {
                return Err(FunctionError::TooCloseToBoundary { point: x.as_slice().to_vec(), margin, needed: h });
            }
        }
        let g = f.gradient(x);
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (f.value(&xp) - f.value(&xm)) / (2.0 * h);
            worst = worst.max((fd - g[i]).abs() / (1.0 + g[i].abs()));
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, Serialize)]
pub struct MarginEstimate {
    /// Sampled strict-convexity margin `m̂ ≥ 0`.
    pub margin: f64,
    /// Set when no positive margin is visible at this sampling resolution.
    pub not_strict: bool,
    /// Where the smallest curvature was observed.
    pub worst: Vec<f64>,
}

const FLAT: f64 = 1e-12;

/// Smallest observed curvature of `f` over deterministic interior samples
/// of `body`: the Chebyshev center, a tensor grid (`n ≤ 3`), and seeded
/// random points. Uses Hessian eigenvalues when available, otherwise the
/// midpoint inequality over sampled pairs.
pub fn strict_margin(
    f: &dyn SmoothFn,
    body: &ConvexBody,
    samples: usize,
    seed: u64,
) -> Result<MarginEstimate, FunctionError> {
    if samples < 100 {
        return Err(FunctionError::InvalidParams(format!("strict_margin needs ≥ 100 samples, got {samples}")));
    }
    let points = probe_points(body, samples, seed);
    let mut best = (f64::INFINITY, points[0].clone());
    if f.hessian(&points[0]).is_some() {
        for x in &points {
            let h = f.hessian(x).expect("hessian availability is uniform");
            let m = h.symmetric_eigenvalues().min();
            if m < best.0 {
                best = (m, x.clone());
            }
        }
    } else {
        let mut rng = seeded(seed ^ 0x5eed);
        for x in &points {
            let y = &points[rng.random_range(0..points.len())];
            let d2 = (x - y).norm_squared();
            if d2 < 1e-6 {
                continue;
            }
            let mid = (x + y) / 2.0;
            let m = 8.0 * ((f.value(x) + f.value(y)) / 2.0 - f.value(&mid)) / d2;
            if m < best.0 {
                best = (m, mid);
            }
        }
    }
    let not_strict = !(best.0 > FLAT);
    Ok(MarginEstimate { margin: if not_strict { 0.0 } else { best.0 }, not_strict, worst: best.1.as_slice().to_vec() })
}

/// Chebyshev center, an odd-sized interior grid for `n ≤ 3`, then seeded
/// interior samples.
pub(crate) fn probe_points(body: &ConvexBody, samples: usize, seed: u64) -> Vec<Point> {
    let mut pts = vec![body.chebyshev_center().clone()];
    if body.is_bounded() && body.dim() <= 3 {
        let mut per_axis = (samples as f64).powf(1.0 / body.dim() as f64).round() as usize;
        per_axis = per_axis.max(5) | 1;
        pts.extend(body.interior_grid(per_axis));
    }
    let mut rng = seeded(seed);
    pts.extend((0..samples).map(|_| body.sample_interior(&mut rng)));
    pts
}

/// Analytic Hessian when available, else a symmetrized central difference
/// of the gradient.
pub(crate) fn hessian_or_fd(f: &dyn SmoothFn, x: &Point) -> nalgebra::DMatrix<f64> {
    if let Some(h) = f.hessian(x) {
        return h;
    }
    let n = x.len();
    let mut h = nalgebra::DMatrix::zeros(n, n);
    for i in 0..n {
        let step = 1e-5 * (1.0 + x[i].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += step;
        xm[i] -= step;
        let col = (f.gradient(&xp) - f.gradient(&xm)) / (2.0 * step);
        h.set_column(i, &col);
    }
    (&h + h.transpose()) / 2.0
}

#[derive(Clone, Debug, Serialize)]
pub struct CoercivityVerdict {
    pub superlinear: bool,
    /// Ray with the smallest growth of `f(t·u)/t`.
    pub worst_ray: Vec<f64>,
    pub worst_growth: f64,
}

const VALUE_CAP: f64 = 1e300;

/// Checks that `f(o + t·u)/t` increases along sampled unit rays over a
/// geometric grid `t ∈ [1, t_max]` and grows by at least one unit overall.
/// `o` is the half-line origin for half-line domains, else `0`.
pub fn coercivity_probe(
    f: &dyn SmoothFn,
    domain: Option<&ConvexBody>,
    rays: usize,
    t_max: f64,
    seed: u64,
) -> Result<CoercivityVerdict, FunctionError> {
    if !(t_max > 1.0) {
        return Err(FunctionError::InvalidParams(format!("t_max = {t_max} must exceed 1")));
    }
    if domain.is_some_and(|d| d.is_bounded()) {
        return Err(FunctionError::InvalidParams("coercivity probe needs an unbounded domain".into()));
    }
    let dim = f.dim();
    let (origin, directions) = match domain.map(|d| d.shape()) {
        Some(crate::geometry::Shape::HalfLine { origin, direction }) => {
            (Point::from_element(1, *origin), vec![Point::from_element(1, *direction)])
        }
        _ => {
            let mut dirs = Vec::new();
            for i in 0..dim {
                let mut e = Point::zeros(dim);
                e[i] = 1.0;
                dirs.push(e.clone());
                dirs.push(-e);
            }
            let mut rng = seeded(seed);
            while dirs.len() < rays.max(2 * dim) {
                dirs.push(unit_vector(&mut rng, dim));
            }
            (Point::zeros(dim), dirs)
        }
    };
    let steps = 16;
    let ts: Vec<f64> = (0..=steps).map(|k| t_max.powf(k as f64 / steps as f64)).collect();
    let mut worst: Option<(f64, Point)> = None;
    let mut all_ok = true;
    for u in directions {
        let mut ratios = Vec::with_capacity(ts.len());
        for &t in &ts {
            let v = f.value(&(&origin + &u * t));
            if !(v < VALUE_CAP) {
                break;
            }
            ratios.push(v / t);
        }
        let capped = ratios.len() < ts.len();
        let increasing = ratios.windows(2).all(|w| w[1] > w[0] + 1e-12 * w[0].abs());
        let growth = if capped {
            f64::INFINITY
        } else {
            ratios.last().copied().unwrap_or(0.0) - ratios.first().copied().unwrap_or(0.0)
        };
        all_ok &= increasing && growth >= 1.0;
        if worst.as_ref().is_none_or(|(g, _)| growth < *g) {
            worst = Some((growth, u));
        }
    }
    let (worst_growth, ray) = worst.expect("at least one ray");
    Ok(CoercivityVerdict {
        superlinear: all_ok,
        worst_ray: ray.as_slice().to_vec(),
        worst_growth: if worst_growth.is_finite() { worst_growth } else { VALUE_CAP },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::oracle::FnOracle;
    use crate::functions::FnSpec;
    use nalgebra::dvector;

    fn identity_quadratic() -> crate::functions::SmoothConvexFn {
        FnSpec::Quadratic { q: vec![vec![1.0, 0.0], vec![0.0, 1.0]], b: None }.builtin().unwrap()
    }

    #[test]
    fn finite_differences_of_builtins() {
        let pts = vec![dvector![0.3, -0.7], dvector![1.5, 2.0], dvector![-4.0, 0.1]];
        let q = identity_quadratic();
        assert!(finite_diff_check(q.oracle().as_ref(), None, &pts, 1e-5).unwrap() <= 1e-9);
        let e = FnSpec::ExpSum { mu: 1.0, dim: 2 }.oracle().unwrap();
        assert!(finite_diff_check(e.as_ref(), None, &[dvector![0.0, 0.0]], 1e-5).unwrap() <= 1e-8);
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let bad = FnOracle::new(
            2,
            |x: &Point| 0.5 * x.norm_squared(),
            |x: &Point| {
                let mut g = x.clone();
                g[0] += 0.1;
                g
            },
        );
        assert!(finite_diff_check(&bad, None, &[dvector![0.2, 0.4]], 1e-5).unwrap() >= 0.05);
    }

    #[test]
    fn stencil_near_boundary_is_rejected() {
        let f = FnSpec::ExpHalfline { mu: 2.0 }.builtin().unwrap();
        let err = finite_diff_check(f.oracle().as_ref(), f.domain(), &[dvector![1e-7]], 1e-5);
        assert!(matches!(err, Err(FunctionError::TooCloseToBoundary { .. })));
    }

    #[test]
    fn hessian_margins() {
        let ball = ConvexBody::unit_ball(2);
        let q = identity_quadratic();
        assert!((strict_margin(q.oracle().as_ref(), &ball, 100, 1).unwrap().margin - 1.0).abs() < 1e-12);
        let lq = FnSpec::LinearPlusQuadratic { a: vec![0.4, -0.2], c: 1.0 }.oracle().unwrap();
        assert!((strict_margin(lq.as_ref(), &ball, 100, 1).unwrap().margin - 2.0).abs() < 1e-12);
    }

    #[test]
    fn quartic_is_flagged_at_its_flat_point() {
        // Oracle: the Hessian diag(12x₁², 12x₂²) has smallest eigenvalue
        // 12·min(x₁², x₂²), which is 0 on the grid point at the origin.
        let quartic = FnSpec::Polynomial {
            dim: 2,
            terms: vec![
                crate::functions::Monomial { coef: 1.0, powers: vec![4, 0] },
                crate::functions::Monomial { coef: 1.0, powers: vec![0, 4] },
            ],
        }
        .oracle()
        .unwrap();
        let est = strict_margin(quartic.as_ref(), &ConvexBody::unit_ball(2), 100, 9).unwrap();
        assert!(est.not_strict);
        assert_eq!(est.margin, 0.0);
    }

    #[test]
    fn midpoint_margin_without_hessian() {
        let f = FnOracle::new(2, |x: &Point| x.norm_squared(), |x: &Point| x * 2.0);
        let est = strict_margin(&f, &ConvexBody::unit_ball(2), 200, 4).unwrap();
        assert!((est.margin - 2.0).abs() < 1e-6, "{}", est.margin);
    }

    #[test]
    fn coercivity_examples() {
        let e = FnSpec::ExpHalfline { mu: 2.0 }.builtin().unwrap();
        assert!(coercivity_probe(e.oracle().as_ref(), e.domain(), 4, 1e3, 1).unwrap().superlinear);
        let q = identity_quadratic();
        assert!(coercivity_probe(q.oracle().as_ref(), None, 8, 1e3, 1).unwrap().superlinear);
        let norm = FnOracle::new(2, |x: &Point| x.norm(), |x: &Point| x / x.norm());
        assert!(!coercivity_probe(&norm, None, 8, 1e3, 1).unwrap().superlinear);
        let exp_sum = FnSpec::ExpSum { mu: 1.0, dim: 2 }.oracle().unwrap();
        assert!(!coercivity_probe(exp_sum.as_ref(), None, 8, 1e3, 1).unwrap().superlinear);
    }
}
