use crate::functions::SmoothFn;
use crate::geometry::{ConvexBody, GeometryError};
use crate::rng::{seeded, split};
use crate::{Covector, Point};

use super::{IterRecord, Location, SolveError, SolveOptions, SolveResult, SolveStatus};

const STEP_MAX: f64 = 1e12;
const BACKTRACK_CAP: usize = 100;
/// Iterations without residual progress tolerated once within tolerance.
const STALL_PATIENCE: usize = 25;

pub(crate) struct Run {
    pub x: Point,
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
    pub trace: Vec<IterRecord>,
}

/// Projected gradient with adaptive step and backtracking on the
/// sufficient-decrease condition `f(y) ≤ f(x) + ⟨∇f, y−x⟩ + ‖y−x‖²/(2s)`.
/// Iterates never increase `f`. Returns `None` when the start value is not
/// finite.
pub(crate) fn descend(
    f: &dyn SmoothFn,
    project: &dyn Fn(&Point) -> Result<Point, GeometryError>,
    x0: &Point,
    opts: &SolveOptions,
) -> Result<Option<Run>, SolveError> {
    let mut x = project(x0)?;
    let mut fx = f.value(&x);
    if !fx.is_finite() {
        return Ok(None);
    }
    let tol = opts.tol_solve;
    let mut s = 1.0;
    let mut best_res = f64::INFINITY;
    let mut stall = 0;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut g = f.gradient(&x);
    let mut res = (&x - project(&(&x - &g))?).norm();
    while iterations < opts.iter_cap {
        if opts.trace_iterates {
            trace.push(IterRecord { iteration: iterations, value: fx, residual: res });
        }
        if res <= 1e-3 * tol {
            break;
        }
        if res < 0.999 * best_res {
            best_res = res;
            stall = 0;
        } else {
            stall += 1;
        }
        if best_res <= tol && stall >= STALL_PATIENCE {
            break;
        }
        let slack = 4.0 * f64::EPSILON * (1.0 + fx.abs());
        let mut moved = false;
        for _ in 0..BACKTRACK_CAP {
            let y = project(&(&x - &g * s))?;
            let d = &y - &x;
            let d2 = d.norm_squared();
            if d2 == 0.0 {
                break;
            }
            let fy = f.value(&y);
            if fy.is_finite() && fy <= fx && fy <= fx + g.dot(&d) + d2 / (2.0 * s) + slack {
                x = y;
                fx = fy;
                s = (2.0 * s).min(STEP_MAX);
                moved = true;
                break;
            }
            s *= 0.5;
        }
        iterations += 1;
        if !moved {
            break;
        }
        g = f.gradient(&x);
        res = (&x - project(&(&x - &g))?).norm();
    }
    Ok(Some(Run { x, value: fx, residual: res, iterations, trace }))
}

/// Chebyshev center followed by seeded interior samples.
pub(crate) fn start_points(body: &ConvexBody, starts: usize, seed: u64) -> Vec<Point> {
    let mut rng = seeded(split(seed, 0x57a7));
    let mut pts = vec![body.chebyshev_center().clone()];
    while pts.len() < starts.max(1) {
        pts.push(body.sample_interior(&mut rng));
    }
    pts
}

/// Runs [`descend`] from each start and merges the runs: the lowest value
/// wins (ties keep the earlier start); disagreement of converged starts
/// beyond `10·tol_solve` marks the result `Degenerate`.
pub(crate) fn minimize_from(
    f: &dyn SmoothFn,
    body: &ConvexBody,
    starts: &[Point],
    opts: &SolveOptions,
) -> Result<SolveResult, SolveError> {
    let project = |x: &Point| body.project(x);
    let mut runs = Vec::with_capacity(starts.len());
    for x0 in starts {
        if x0.len() != body.dim() {
            return Err(GeometryError::DimensionMismatch { expected: body.dim(), found: x0.len() }.into());
        }
        if let Some(run) = descend(f, &project, x0, opts)? {
            runs.push(run);
        }
    }
    let best = (0..runs.len())
        .min_by(|&a, &b| runs[a].value.total_cmp(&runs[b].value).then(a.cmp(&b)))
        .ok_or(SolveError::NoFeasibleStart)?;
    let tol = opts.tol_solve;
    let spread = runs.iter().filter(|r| r.residual <= tol).map(|r| (&r.x - &runs[best].x).norm()).fold(0.0, f64::max);
    let run = runs.swap_remove(best);
    let status = if run.residual > tol {
        SolveStatus::IterCap
    } else if spread > 10.0 * tol {
        SolveStatus::Degenerate
    } else {
        SolveStatus::Converged
    };
    Ok(SolveResult {
        location: Location::of(body.membership(&run.x)),
        x_star: run.x,
        value: run.value,
        grad_residual: run.residual,
        pg_residual: run.residual,
        iterations: run.iterations,
        status,
        start_spread: spread,
        trace: run.trace,
    })
}

pub fn minimize_over_body(f: &dyn SmoothFn, body: &ConvexBody, opts: &SolveOptions) -> Result<SolveResult, SolveError> {
    if f.dim() != body.dim() {
        return Err(GeometryError::DimensionMismatch { expected: body.dim(), found: f.dim() }.into());
    }
    minimize_from(f, body, &start_points(body, opts.starts, opts.seed), opts)
}

/// `x ↦ f(x) − ⟨γ, x⟩` without taking ownership of `f`.
#[derive(Debug)]
pub(crate) struct Shifted<'a> {
    pub f: &'a dyn SmoothFn,
    pub gamma: Covector,
}

impl SmoothFn for Shifted<'_> {
    fn dim(&self) -> usize {
        self.f.dim()
    }

    fn value(&self, x: &Point) -> f64 {
        self.f.value(x) - self.gamma.dot(x)
    }

    fn gradient(&self, x: &Point) -> Point {
        self.f.gradient(x) - &self.gamma
    }
}

/// Solves `∇J(x) = γ` by minimizing `J − ⟨γ, ·⟩` over the body; the
/// reported residual is `‖∇J(x*) − γ‖`.
pub fn solve_gradient_equation(
    j: &dyn SmoothFn,
    gamma: &Covector,
    body: &ConvexBody,
    opts: &SolveOptions,
) -> Result<SolveResult, SolveError> {
    if gamma.len() != body.dim() {
        return Err(GeometryError::DimensionMismatch { expected: body.dim(), found: gamma.len() }.into());
    }
    let shifted = Shifted { f: j, gamma: gamma.clone() };
    let mut r = minimize_over_body(&shifted, body, opts)?;
    r.value = j.value(&r.x_star);
    r.grad_residual = (j.gradient(&r.x_star) - gamma).norm();
    Ok(r)
}
