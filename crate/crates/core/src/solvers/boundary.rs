use serde::Serialize;

use crate::functions::SmoothFn;
use crate::geometry::{dykstra, BoundaryAtlas, Chart};
use crate::Point;

use super::{Location, SolveError, SolveOptions, SolveResult, SolveStatus};

/// Local grid minima refined per chart.
const MAX_BASINS: usize = 32;
const PARAM_TOL: f64 = 1e-11;
const COMPASS_EVALS: usize = 6000;

/// A refined local minimum of a boundary function.
#[derive(Clone, Debug, Serialize)]
pub struct Basin {
    pub chart: usize,
    pub theta: f64,
    pub phi: f64,
    #[serde(serialize_with = "crate::ser::point")]
    pub x: Point,
    pub value: f64,
    /// Value at the atlas sample the refinement started from.
    pub grid_value: f64,
    pub sample: usize,
    /// Final parameter bracket.
    pub bracket: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundarySolve {
    pub best: SolveResult,
    /// Refined local minima, ascending by value.
    pub basins: Vec<Basin>,
    pub grid_min: f64,
    /// Refinement moved the minimum by more than `100·tol_solve` below the
    /// best atlas sample.
    pub resolution_insufficient: bool,
}

/// Global minimizer of `f` over the sampled boundary: atlas scan, then
/// golden-section refinement on curve charts and compass search on surface
/// charts.
pub fn minimize_over_boundary(
    f: &dyn SmoothFn,
    atlas: &BoundaryAtlas,
    opts: &SolveOptions,
) -> Result<BoundarySolve, SolveError> {
    if f.dim() != atlas.body.dim() {
        return Err(SolveError::InvalidInput("function and atlas dimensions differ".into()));
    }
    minimize_boundary_fn(atlas, &|_, _, _, x| f.value(x), opts)
}

/// Boundary evaluator: `(chart, θ, φ, x) ↦ value`.
pub(crate) type BoundaryEval<'a> = dyn Fn(usize, f64, f64, &Point) -> f64 + Sync + 'a;

pub(crate) fn minimize_boundary_fn(
    atlas: &BoundaryAtlas,
    eval: &BoundaryEval<'_>,
    opts: &SolveOptions,
) -> Result<BoundarySolve, SolveError> {
    if atlas.is_empty() {
        return Err(SolveError::InvalidInput("empty atlas".into()));
    }
    let values: Vec<f64> = atlas.samples.iter().map(|s| eval(s.chart, s.theta, s.phi, &s.x)).collect();
    let grid_min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut basins = Vec::new();
    for (c, chart) in atlas.charts.iter().enumerate() {
        let idx: Vec<usize> = (0..atlas.len()).filter(|&i| atlas.samples[i].chart == c).collect();
        if idx.is_empty() {
            continue;
        }
        match chart {
            Chart::Point(_) | Chart::Endpoints(..) => {
                for &i in &idx {
                    let s = &atlas.samples[i];
                    basins.push(Basin {
                        chart: c,
                        theta: s.theta,
                        phi: s.phi,
                        x: s.x.clone(),
                        value: values[i],
                        grid_value: values[i],
                        sample: i,
                        bracket: 0.0,
                    });
                }
            }
            Chart::Circle { .. } | Chart::Polygon { .. } => {
                basins.extend(curve_basins(atlas, c, chart, &idx, &values, eval));
            }
            Chart::Sphere { .. } | Chart::Facet { .. } => {
                basins.extend(surface_basins(atlas, c, chart, &idx, &values, eval)?);
            }
        }
    }
    basins.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.sample.cmp(&b.sample)));
    let b = &basins[0];
    let best = SolveResult {
        x_star: b.x.clone(),
        value: b.value,
        grad_residual: b.bracket,
        pg_residual: b.bracket,
        location: Location::Boundary,
        iterations: basins.len(),
        status: SolveStatus::Converged,
        start_spread: 0.0,
        trace: Vec::new(),
    };
    Ok(BoundarySolve {
        resolution_insufficient: grid_min - best.value > 100.0 * opts.tol_solve,
        best,
        basins,
        grid_min,
    })
}

/// Lowest `MAX_BASINS` entries of `cands` (indices into `values`).
fn lowest(mut cands: Vec<usize>, values: &[f64]) -> Vec<usize> {
    cands.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    cands.truncate(MAX_BASINS);
    cands
}

fn curve_basins(
    atlas: &BoundaryAtlas,
    c: usize,
    chart: &Chart,
    idx: &[usize],
    values: &[f64],
    eval: &BoundaryEval<'_>,
) -> Vec<Basin> {
    let period = chart.period().expect("closed curve");
    let m = idx.len();
    let local: Vec<usize> = (0..m)
        .filter(|&k| {
            let v = values[idx[k]];
            v <= values[idx[(k + m - 1) % m]] && v <= values[idx[(k + 1) % m]]
        })
        .collect();
    let chosen = lowest(local.iter().map(|&k| idx[k]).collect(), values);
    chosen
        .into_iter()
        .map(|i| {
            let k = idx.iter().position(|&j| j == i).expect("sample of this chart");
            let theta_i = atlas.samples[i].theta;
            let mut lo = atlas.samples[idx[(k + m - 1) % m]].theta;
            let mut hi = atlas.samples[idx[(k + 1) % m]].theta;
            if lo >= theta_i {
                lo -= period;
            }
            if hi <= theta_i {
                hi += period;
            }
            let h = |t: f64| eval(c, t, 0.0, &chart.point(t, 0.0));
            let (t, v, bracket) = golden(&h, lo, hi);
            let grid_value = values[i];
            let (theta, value) = if v <= grid_value { (t.rem_euclid(period), v) } else { (theta_i, grid_value) };
            Basin { chart: c, theta, phi: 0.0, x: chart.point(theta, 0.0), value, grid_value, sample: i, bracket }
        })
        .collect()
}

/// Golden-section minimization on `[a, b]`: `(t*, h(t*), final width)`.
pub(crate) fn golden(h: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (h(x1), h(x2));
    while b - a > PARAM_TOL * (1.0 + a.abs().max(b.abs())) {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = h(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = h(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1, b - a)
    } else {
        (x2, f2, b - a)
    }
}

fn surface_basins(
    atlas: &BoundaryAtlas,
    c: usize,
    chart: &Chart,
    idx: &[usize],
    values: &[f64],
    eval: &BoundaryEval<'_>,
) -> Result<Vec<Basin>, SolveError> {
    let pts: Vec<&Point> = idx.iter().map(|&i| &atlas.samples[i].x).collect();
    let nn = |k: usize| {
        (0..pts.len())
            .filter(|&l| l != k)
            .map(|l| (pts[k] - pts[l]).norm())
            .filter(|&d| d > 1e-12)
            .fold(f64::INFINITY, f64::min)
    };
    let h = (0..pts.len()).map(nn).filter(|d| d.is_finite()).fold(0.0, f64::max);
    let local: Vec<usize> = (0..pts.len())
        .filter(|&k| (0..pts.len()).all(|l| (pts[k] - pts[l]).norm() > 1.5 * h || values[idx[k]] <= values[idx[l]]))
        .map(|k| idx[k])
        .collect();
    let hs = atlas.body.halfspaces();
    let mut out = Vec::new();
    for i in lowest(local, values) {
        let s = &atlas.samples[i];
        // Parameters to a boundary point, snapped back onto the chart.
        let place = |t: f64, p: f64| -> Result<(f64, f64, Point), SolveError> {
            match chart {
                Chart::Sphere { .. } => {
                    let p = p.clamp(0.0, std::f64::consts::PI);
                    Ok((t, p, chart.point(t, p)))
                }
                Chart::Facet { halfspace, origin, u, v } => {
                    let x = chart.point(t, p);
                    if atlas.body.signed_distance(&x) >= -1e-12 {
                        return Ok((t, p, x));
                    }
                    let hs = hs.as_ref().expect("polytope facets");
                    let y = dykstra(hs, Some(&hs[*halfspace]), &x)?;
                    Ok(((&y - origin).dot(u), (&y - origin).dot(v), y))
                }
                _ => unreachable!("surface chart"),
            }
        };
        let (mut t, mut p, mut x) = (s.theta, s.phi, s.x.clone());
        let mut v = values[i];
        let mut step = if h > 0.0 { h } else { 1e-3 };
        if matches!(chart, Chart::Sphere { radius, .. } if *radius > 0.0) {
            if let Chart::Sphere { radius, .. } = chart {
                step /= radius;
            }
        }
        let mut evals = 0;
        while step > PARAM_TOL && evals < COMPASS_EVALS {
            let mut improved = false;
            for (dt, dp) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
                let (nt, np, nx) = place(t + dt, p + dp)?;
                let nv = eval(c, nt, np, &nx);
                evals += 1;
                if nv < v {
                    (t, p, x, v) = (nt, np, nx, nv);
                    improved = true;
                    break;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        out.push(Basin { chart: c, theta: t, phi: p, x, value: v, grid_value: values[i], sample: i, bracket: step });
    }
    Ok(out)
}
