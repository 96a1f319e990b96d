use serde::Serialize;
use serde_json::json;

use super::{MemberResult, TheoremError, TheoremOptions, TheoremReport};
use crate::functions::FnSpec;
use crate::geometry::{certify_nonconvex_boundary, sample_boundary, BoundaryConvexity, ConvexBody};
use crate::solvers::solve_gradient_equation;
use crate::Point;

/// Grid points on `]0, X_MAX]` used for the residual bound.
const GRID: usize = 10_000;
const X_MAX: f64 = 10.0;

#[derive(Clone, Debug, Serialize)]
pub struct HalflineCase {
    pub gamma: f64,
    pub mu: f64,
    pub solver_x: f64,
    pub solver_residual: f64,
    pub interior_solution: bool,
    /// `min |J'(x) − γ|` over the grid.
    pub grid_residual: f64,
    /// `μ − γ`.
    pub bound: f64,
    /// `J' ≥ μ` and non-decreasing on the grid.
    pub monotone: bool,
    pub certified: bool,
}

/// For each `γ`, `J = μ(eˣ − 1)` with `μ = max(0, γ) + 1` is strictly
/// convex on `[0, ∞)` yet `J'(x) = γ` has no solution with `x > 0`: no
/// single `γ` is attained by every such `J` when the boundary is convex.
pub fn halfline_counterexample(gammas: &[f64], opts: &TheoremOptions) -> Result<TheoremReport, TheoremError> {
    let body = ConvexBody::half_line(0.0, 1.0)?;
    let convexity = certify_nonconvex_boundary(&sample_boundary(&body, 4)?)?;
    let tol = opts.solve.tol_solve;
    let mut cases = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let mu = gamma.max(0.0) + 1.0;
        let j = FnSpec::ExpHalfline { mu }.builtin()?;
        let r = solve_gradient_equation(j.oracle().as_ref(), &Point::from_element(1, gamma), &body, &opts.solve)?;
        let slopes: Vec<f64> =
            (1..=GRID).map(|k| j.gradient(&Point::from_element(1, X_MAX * k as f64 / GRID as f64))[0]).collect();
        let grid_residual = slopes.iter().map(|s| (s - gamma).abs()).fold(f64::INFINITY, f64::min);
        let bound = mu - gamma;
        let monotone = slopes.iter().all(|&s| s >= mu) && slopes.windows(2).all(|w| w[1] >= w[0]);
        let interior = r.interior_solution(tol);
        cases.push(HalflineCase {
            gamma,
            mu,
            solver_x: r.x_star[0],
            solver_residual: r.grad_residual,
            interior_solution: interior,
            grid_residual,
            bound,
            monotone,
            certified: !interior && monotone && bound >= 1.0 - 1e-12 && grid_residual >= bound,
        });
    }
    let inputs = json!({ "theorem": "halfline", "gammas": gammas, "grid": GRID, "x_max": X_MAX, "tol_solve": tol });
    let mut report = TheoremReport::new("halfline", &inputs);
    report.members = cases
        .iter()
        .enumerate()
        .map(|(k, c)| MemberResult {
            index: k,
            passed: c.certified,
            notes: vec![format!("γ = {}, μ = {}: |J' − γ| ≥ {} on the grid", c.gamma, c.mu, c.grid_residual)],
            ..MemberResult::default()
        })
        .collect();
    if matches!(convexity, BoundaryConvexity::ConvexBoundary) {
        report.notes.push(TheoremError::ConvexBoundary.to_string());
    }
    report.details = json!({ "boundary": convexity, "cases": cases });
    report.finish();
    Ok(report)
}
