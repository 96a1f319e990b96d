use rayon::prelude::*;
use serde::Serialize;

use crate::functions::oracle::Sum;
use crate::functions::{Oracle, SmoothFn};
use crate::geometry::{sample_boundary, ConvexBody, GeometryError, Membership};
use crate::rng::{seeded, split, unit_vector};
use crate::tol::{geometric_grid, TOL_GEOM};
use crate::{Covector, Point};

use super::pg::{minimize_from, start_points};
use super::{solve_gradient_equation, SolveError, SolveOptions, SolveResult};

/// `±eᵢ` followed by seeded random unit vectors, `count` in total (at least
/// the `2n` axis directions).
pub fn default_directions(dim: usize, count: usize, seed: u64) -> Vec<Covector> {
    let mut dirs = Vec::new();
    for i in 0..dim {
        let mut e = Covector::zeros(dim);
        e[i] = 1.0;
        dirs.push(e.clone());
        dirs.push(-e);
    }
    let mut rng = seeded(split(seed, 0xd1));
    while dirs.len() < count {
        dirs.push(unit_vector(&mut rng, dim));
    }
    dirs
}

#[derive(Clone, Debug, Serialize)]
pub struct DirectionResult {
    #[serde(serialize_with = "crate::ser::point")]
    pub direction: Covector,
    /// Largest grid `δ` with interior solutions on the whole grid `[0, δ]`.
    pub delta_hat: f64,
    /// First failing `λ` and the reason.
    pub failure: Option<(f64, String)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct InteriorTestReport {
    #[serde(serialize_with = "crate::ser::point")]
    pub gamma: Covector,
    pub delta_min: f64,
    pub base: SolveResult,
    pub directions: Vec<DirectionResult>,
    pub passed: bool,
}

impl InteriorTestReport {
    pub fn min_delta_hat(&self) -> f64 {
        self.directions.iter().map(|d| d.delta_hat).fold(f64::INFINITY, f64::min)
    }
}

fn failure_reason(r: &SolveResult, tol: f64) -> String {
    if !r.location.is_interior() {
        "minimizer on the boundary".into()
    } else if r.grad_residual > tol {
        format!("residual {:e}", r.grad_residual)
    } else {
        format!("status {:?}", r.status)
    }
}

/// Measures, per direction `y`, how far `γ + λy` stays in `∇J(int C)` along
/// an ascending `δ` grid, stopping at the first failure.
pub fn algebraic_interior_test(
    j: &dyn SmoothFn,
    gamma: &Covector,
    body: &ConvexBody,
    directions: &[Covector],
    delta_grid: &[f64],
    delta_min: f64,
    opts: &SolveOptions,
) -> Result<InteriorTestReport, SolveError> {
    if directions.is_empty() {
        return Err(SolveError::InvalidInput("no directions".into()));
    }
    if directions.iter().any(|y| y.len() != body.dim() || !(y.norm() > 0.0)) {
        return Err(SolveError::InvalidInput("directions must be non-zero and match the body".into()));
    }
    let tol = opts.tol_solve;
    let base = solve_gradient_equation(j, gamma, body, opts)?;
    let base_ok = base.interior_solution(tol);
    let results: Result<Vec<DirectionResult>, SolveError> = directions
        .par_iter()
        .map(|y| {
            let y = y / y.norm();
            if !base_ok {
                return Ok(DirectionResult {
                    direction: y,
                    delta_hat: 0.0,
                    failure: Some((0.0, failure_reason(&base, tol))),
                });
            }
            let mut delta_hat = 0.0;
            let mut failure = None;
            for &lambda in delta_grid {
                let r = solve_gradient_equation(j, &(gamma + &y * lambda), body, opts)?;
                if r.interior_solution(tol) {
                    delta_hat = lambda;
                } else {
                    failure = Some((lambda, failure_reason(&r, tol)));
                    break;
                }
            }
            Ok(DirectionResult { direction: y, delta_hat, failure })
        })
        .collect();
    let directions = results?;
    let passed = base_ok && directions.iter().all(|d| d.delta_hat >= delta_min);
    Ok(InteriorTestReport { gamma: gamma.clone(), delta_min, base, directions, passed })
}

/// `B(x) + λG(x)` with `B = Σ base − ⟨γ, ·⟩`, equal to `+∞` outside the
/// sublevel region `{B < σ}` so that `G` is never evaluated there.
#[derive(Debug)]
struct Perturbed<'a> {
    base: &'a dyn SmoothFn,
    g: &'a dyn SmoothFn,
    gamma: &'a Covector,
    lambda: f64,
    sigma: Option<f64>,
}

impl SmoothFn for Perturbed<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn value(&self, x: &Point) -> f64 {
        let b = self.base.value(x) - self.gamma.dot(x);
        if self.sigma.is_some_and(|s| !(b < s)) {
            return f64::INFINITY;
        }
        b + self.lambda * self.g.value(x)
    }

    fn gradient(&self, x: &Point) -> Point {
        self.base.gradient(x) - self.gamma + self.g.gradient(x) * self.lambda
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub lambda_grid: Vec<f64>,
    pub per_lambda: Vec<SolveResult>,
    pub success: Vec<bool>,
    /// Last `λ` of the success run starting at `λ = 0` (`0` when the run
    /// stops before the first positive grid point).
    pub eps_hat: f64,
    /// Same, for the run starting at the smallest positive `λ` (`]0, ε[`).
    pub eps_hat_open: f64,
    pub lambda0_ok: bool,
    /// `λ_max` below the grid floor: only `λ = 0` was solved.
    pub degenerate: bool,
}

impl SweepResult {
    /// `eps_hat > 0`, or the `λ = 0` solve alone for degenerate sweeps.
    pub fn passed(&self) -> bool {
        if self.degenerate {
            self.lambda0_ok
        } else {
            self.eps_hat > 0.0
        }
    }
}

/// Solves `∇(Σ base)(x) + λ∇G(x) = γ` over `{0} ∪` the geometric grid of
/// `[1e−4, λ_max]`. The `λ = 0` entry is exactly
/// [`solve_gradient_equation`] on `Σ base`.
pub fn lambda_sweep(
    base: &[Oracle],
    g: &dyn SmoothFn,
    gamma: &Covector,
    body: &ConvexBody,
    lambda_max: f64,
    sigma: Option<f64>,
    opts: &SolveOptions,
) -> Result<SweepResult, SolveError> {
    let dim = body.dim();
    if base.is_empty() || base.iter().any(|f| f.dim() != dim) || g.dim() != dim || gamma.len() != dim {
        return Err(SolveError::InvalidInput("sweep inputs must be non-empty and match the body".into()));
    }
    let sum = Sum::new(dim, base.iter().map(|f| (1.0, f.clone())).collect());
    let tol = opts.tol_solve;
    let r0 = solve_gradient_equation(&sum, gamma, body, opts)?;
    let positive = geometric_grid(lambda_max);
    let mut starts = vec![r0.x_star.clone()];
    starts.extend(start_points(body, opts.starts.saturating_sub(1), opts.seed));
    let rest: Result<Vec<SolveResult>, SolveError> = positive
        .par_iter()
        .map(|&lambda| {
            let f = Perturbed { base: &sum, g, gamma, lambda, sigma };
            let mut r = minimize_from(&f, body, &starts, opts)?;
            let residual = (sum.gradient(&r.x_star) + g.gradient(&r.x_star) * lambda - gamma).norm();
            r.grad_residual = residual;
            Ok(r)
        })
        .collect();
    let mut per_lambda = vec![r0];
    per_lambda.extend(rest?);
    let success: Vec<bool> = per_lambda.iter().map(|r| r.interior_solution(tol)).collect();
    let mut lambda_grid = vec![0.0];
    lambda_grid.extend(&positive);
    let run_end = |from: usize| -> f64 {
        let mut last = 0.0;
        for k in from..lambda_grid.len() {
            if !success[k] {
                break;
            }
            last = lambda_grid[k];
        }
        last
    };
    let eps_hat = if success[0] { run_end(1) } else { 0.0 };
    Ok(SweepResult {
        eps_hat,
        eps_hat_open: run_end(1),
        lambda0_ok: success[0],
        degenerate: positive.is_empty(),
        lambda_grid,
        per_lambda,
        success,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SublevelVerdict {
    pub holds: bool,
    pub sigma: f64,
    /// Interior grid points with value below `σ`.
    pub sublevel_points: usize,
    /// A boundary point with value below `σ`.
    pub witness: Option<Vec<f64>>,
    pub witness_value: Option<f64>,
}

/// Checks `{x ∈ C : f(x) < σ} ⊆ int C` on a tensor grid (`per_axis` points
/// per axis) and on a boundary atlas.
pub fn check_sublevel(
    f: &dyn SmoothFn,
    body: &ConvexBody,
    sigma: f64,
    per_axis: usize,
) -> Result<SublevelVerdict, SolveError> {
    if !body.is_bounded() || body.dim() > 3 {
        return Err(GeometryError::Unsupported("sublevel check needs a bounded body with n ≤ 3".into()).into());
    }
    let atlas = sample_boundary(body, if body.dim() == 2 { 4 * per_axis } else { per_axis.clamp(8, 48) })?;
    let mut sublevel_points = 0;
    let mut worst: Option<(f64, Point)> = None;
    let mut consider = |x: &Point, v: f64| {
        if v < sigma && worst.as_ref().is_none_or(|(w, _)| v < *w) {
            worst = Some((v, x.clone()));
        }
    };
    for x in body.box_grid(per_axis) {
        let v = f.value(&x);
        match body.membership(&x) {
            Membership::Interior { margin } if margin > TOL_GEOM => sublevel_points += usize::from(v < sigma),
            Membership::Outside => {}
            _ => consider(&x, v),
        }
    }
    for s in &atlas.samples {
        consider(&s.x, f.value(&s.x));
    }
    Ok(SublevelVerdict {
        holds: worst.is_none(),
        sigma,
        sublevel_points,
        witness_value: worst.as_ref().map(|w| w.0),
        witness: worst.map(|w| w.1.as_slice().to_vec()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::oracle::FnOracle;
    use crate::functions::FnSpec;
    use nalgebra::dvector;
    use std::sync::Arc;

    fn half_sq() -> Oracle {
        FnSpec::Quadratic { q: vec![vec![1.0, 0.0], vec![0.0, 1.0]], b: None }.oracle().unwrap()
    }

    fn fast() -> SolveOptions {
        SolveOptions { starts: 3, ..SolveOptions::default() }
    }

    #[test]
    fn interior_test_at_the_center() {
        let disk = ConvexBody::unit_ball(2);
        let dirs = default_directions(2, 8, 1);
        assert_eq!(dirs.len(), 8);
        // Solutions x = λy leave the open disk at λ = 1, so the grid stops short of it.
        let r = algebraic_interior_test(
            half_sq().as_ref(),
            &dvector![0.0, 0.0],
            &disk,
            &dirs,
            &geometric_grid(0.95),
            1e-3,
            &fast(),
        )
        .unwrap();
        assert!(r.passed);
        assert!(r.min_delta_hat() >= 0.9, "{:?}", r.directions);
        let full = algebraic_interior_test(
            half_sq().as_ref(),
            &dvector![0.0, 0.0],
            &disk,
            &dirs[..1],
            &geometric_grid(1.0),
            1e-3,
            &fast(),
        )
        .unwrap();
        assert_eq!(full.directions[0].failure.as_ref().unwrap().0, 1.0);
    }

    #[test]
    fn interior_test_near_the_edge() {
        let disk = ConvexBody::unit_ball(2);
        let r = algebraic_interior_test(
            half_sq().as_ref(),
            &dvector![0.95, 0.0],
            &disk,
            &[dvector![1.0, 0.0]],
            &geometric_grid(1.0),
            1e-3,
            &fast(),
        )
        .unwrap();
        let d = r.directions[0].delta_hat;
        assert!(d > 0.0 && d < 0.05, "{d}");
    }

    #[test]
    fn interior_test_on_the_half_line_fails_everywhere() {
        let e = FnSpec::ExpHalfline { mu: 2.0 }.builtin().unwrap();
        let r = algebraic_interior_test(
            e.oracle().as_ref(),
            &dvector![1.0],
            e.domain().unwrap(),
            &default_directions(1, 2, 0),
            &geometric_grid(1.0),
            1e-3,
            &fast(),
        )
        .unwrap();
        assert!(!r.passed);
        assert!(r.directions.iter().all(|d| d.delta_hat == 0.0));
    }

    fn barrier() -> Oracle {
        FnSpec::RadialBarrier { center: vec![0.0, 0.0], radius: 1.0, scale: 1.0 }.oracle().unwrap()
    }

    #[test]
    fn symmetric_sweep() {
        let disk = ConvexBody::unit_ball(2);
        let j = FnSpec::NormPower { p: 2.0, dim: 2 }.oracle().unwrap();
        let r = lambda_sweep(&[j], barrier().as_ref(), &dvector![0.0, 0.0], &disk, 1.0, None, &fast()).unwrap();
        assert_eq!(r.eps_hat, 1.0);
        assert_eq!(r.eps_hat_open, 1.0);
        assert!(r.per_lambda.iter().all(|s| s.x_star.norm() < 1e-7));
    }

    #[test]
    fn lambda_zero_column_is_the_plain_solve() {
        let disk = ConvexBody::unit_ball(2);
        let j = FnSpec::LinearPlusQuadratic { a: vec![1.0, 0.0], c: 1.0 }.oracle().unwrap();
        let gamma = dvector![1.0, 0.0];
        let r =
            lambda_sweep(std::slice::from_ref(&j), barrier().as_ref(), &gamma, &disk, 0.5, Some(0.5), &fast()).unwrap();
        let plain = solve_gradient_equation(j.as_ref(), &gamma, &disk, &fast()).unwrap();
        assert_eq!(r.per_lambda[0].x_star, plain.x_star);
        assert_eq!(r.per_lambda[0].value.to_bits(), plain.value.to_bits());
        assert!(r.passed());
    }

    #[test]
    fn degenerate_sweep() {
        let disk = ConvexBody::unit_ball(2);
        let r = lambda_sweep(&[half_sq()], barrier().as_ref(), &dvector![0.1, 0.0], &disk, 0.0, None, &fast()).unwrap();
        assert!(r.degenerate && r.lambda0_ok && r.passed());
        assert_eq!(r.lambda_grid, vec![0.0]);
    }

    #[test]
    fn sublevel_checks() {
        let disk = ConvexBody::unit_ball(2);
        let f = FnOracle::new(2, |x: &Point| x.norm_squared() - 1.0, |x: &Point| x * 2.0);
        let v = check_sublevel(&f, &disk, -0.5, 101).unwrap();
        assert!(v.holds && v.sublevel_points > 0);
        let v = check_sublevel(&f, &disk, 1.0, 101).unwrap();
        assert!(!v.holds && v.witness.is_some());
        let lifted: Oracle =
            Arc::new(FnOracle::new(2, |x: &Point| x[0] + x.norm_squared() - 1.0 - x[0], |x: &Point| x * 2.0));
        assert!(check_sublevel(lifted.as_ref(), &disk, -0.5, 101).unwrap().holds);
    }
}
