use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::{TheoremError, TheoremOptions};
use crate::functions::BoundaryTrace;
use crate::geometry::Chart;
use crate::minimax::{find_two_minima_witness, linear_pairing, AffineMap, MinimaxError, YGrid, YSet};
use crate::solvers::{minimize_boundary_fn, Basin, BoundarySolve};
use crate::{Covector, DMatrix, Point};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaStrategy {
    /// Make pairs of boundary points stationary and equal, then verify.
    PairEqualize,
    /// Two-minima witness of the linear minimax pairing.
    MinimaxGrid,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundaryMinimum {
    pub x: Vec<f64>,
    pub chart: usize,
    pub theta: f64,
    pub phi: f64,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EtaCandidate {
    pub eta: Vec<f64>,
    /// `−η`.
    pub gamma: Vec<f64>,
    /// Separated global minima of `φ + ⟨η, ·⟩` on the boundary.
    pub boundary_minima: Vec<BoundaryMinimum>,
    /// Value gap of the lowest basin separated from every minimum; `None`
    /// when no such basin exists.
    pub quality: Option<f64>,
    /// `min_∂C (φ + ⟨η, ·⟩) − ⟨η, y₀⟩` with `y₀` the Chebyshev center.
    pub dual_value: f64,
    pub strategy: EtaStrategy,
    pub polish_steps: usize,
}

impl EtaCandidate {
    pub fn eta(&self) -> Covector {
        Covector::from_column_slice(&self.eta)
    }

    pub fn gamma(&self) -> Covector {
        Covector::from_column_slice(&self.gamma)
    }

    pub fn is_multi_minimal(&self) -> bool {
        self.boundary_minima.len() >= 2
    }
}

const PAIR_ROWS: usize = 48;
const PAIR_COLS: usize = 96;
const BISECT_STEPS: usize = 60;
const POLISH_STEPS: usize = 40;
const DIFF_STEP: f64 = 1e-5;

/// Finds `η̃` such that `φ + ⟨η̃, ·⟩` has at least two separated global
/// minima on the boundary of a bounded planar body.
pub fn search_eta(
    phi: &BoundaryTrace,
    strategy: EtaStrategy,
    opts: &TheoremOptions,
) -> Result<EtaCandidate, TheoremError> {
    let body = &phi.atlas.body;
    if !body.is_bounded() || body.dim() != 2 {
        return Err(TheoremError::Unsupported("η search needs a bounded planar body".into()));
    }
    let eta0 = match strategy {
        EtaStrategy::PairEqualize => pair_equalize(phi, opts)?,
        EtaStrategy::MinimaxGrid => minimax_start(phi, opts)?,
    };
    let cand = polish(phi, eta0, strategy, opts)?;
    if cand.is_multi_minimal() {
        Ok(cand)
    } else {
        Err(TheoremError::NotFound(Box::new(cand)))
    }
}

/// `φ` at a chart parameter: the trace source when there is one, else
/// linear interpolation along a closed curve or the nearest sample.
fn phi_value(phi: &BoundaryTrace, chart: usize, theta: f64, ang: f64, x: &Point) -> f64 {
    if let Some(v) = phi.eval(chart, theta, ang) {
        return v;
    }
    let atlas = &phi.atlas;
    if let Some(period) = atlas.charts[chart].period() {
        let idx: Vec<usize> = (0..atlas.len()).filter(|&i| atlas.samples[i].chart == chart).collect();
        let t = theta.rem_euclid(period);
        let k = idx.partition_point(|&i| atlas.samples[i].theta <= t);
        let (a, b) = (idx[(k + idx.len() - 1) % idx.len()], idx[k % idx.len()]);
        let (ta, mut tb) = (atlas.samples[a].theta, atlas.samples[b].theta);
        if tb <= ta {
            tb += period;
        }
        let mut s = if t >= ta { t } else { t + period };
        s = ((s - ta) / (tb - ta)).clamp(0.0, 1.0);
        return phi.values[a] * (1.0 - s) + phi.values[b] * s;
    }
    let nearest = (0..atlas.len())
        .min_by(|&a, &b| (&atlas.samples[a].x - x).norm().total_cmp(&(&atlas.samples[b].x - x).norm()))
        .expect("non-empty atlas");
    phi.values[nearest]
}

struct Assessment {
    solve: BoundarySolve,
    minima: Vec<usize>,
    quality: Option<f64>,
}

fn separated(basins: &[Basin], chosen: &[usize], b: &Basin, sep: f64) -> bool {
    chosen.iter().all(|&k| (&basins[k].x - &b.x).norm() >= sep)
}

fn assess(phi: &BoundaryTrace, eta: &Covector, opts: &TheoremOptions) -> Result<Assessment, TheoremError> {
    let eval = |c: usize, t: f64, a: f64, x: &Point| phi_value(phi, c, t, a, x) + eta.dot(x);
    let solve = minimize_boundary_fn(&phi.atlas, &eval, &opts.solve)?;
    let basins = &solve.basins;
    let min = basins[0].value;
    let mut minima: Vec<usize> = Vec::new();
    for (k, b) in basins.iter().enumerate() {
        if b.value <= min + opts.tol_multi && separated(basins, &minima, b, opts.sep_min) {
            minima.push(k);
        }
    }
    // Flat stretches hold few local minima; atlas samples within tolerance
    // of the minimum count as well.
    let atlas = &phi.atlas;
    let mut extra: Vec<Basin> = Vec::new();
    let mut order: Vec<usize> = (0..atlas.len()).collect();
    let sample_values: Vec<f64> = atlas.samples.iter().map(|s| eval(s.chart, s.theta, s.phi, &s.x)).collect();
    order.sort_by(|&a, &b| sample_values[a].total_cmp(&sample_values[b]).then(a.cmp(&b)));
    for &i in order.iter().take_while(|&&i| sample_values[i] <= min + opts.tol_multi) {
        let s = &atlas.samples[i];
        let far = minima.iter().all(|&k| (&basins[k].x - &s.x).norm() >= opts.sep_min)
            && extra.iter().all(|e| (&e.x - &s.x).norm() >= opts.sep_min);
        if far {
            extra.push(Basin {
                chart: s.chart,
                theta: s.theta,
                phi: s.phi,
                x: s.x.clone(),
                value: sample_values[i],
                grid_value: sample_values[i],
                sample: i,
                bracket: 0.0,
            });
        }
    }
    let quality = basins
        .iter()
        .find(|b| {
            separated(basins, &minima, b, opts.sep_min) && extra.iter().all(|e| (&e.x - &b.x).norm() >= opts.sep_min)
        })
        .map(|b| b.value - min);
    let mut solve = solve;
    for e in extra {
        minima.push(solve.basins.len());
        solve.basins.push(e);
    }
    Ok(Assessment { solve, minima, quality })
}

fn candidate(
    phi: &BoundaryTrace,
    eta: Covector,
    a: &Assessment,
    strategy: EtaStrategy,
    polish_steps: usize,
) -> EtaCandidate {
    let y0 = phi.atlas.body.chebyshev_center();
    let basins = &a.solve.basins;
    EtaCandidate {
        gamma: (-&eta).as_slice().to_vec(),
        boundary_minima: a
            .minima
            .iter()
            .map(|&k| BoundaryMinimum {
                x: basins[k].x.as_slice().to_vec(),
                chart: basins[k].chart,
                theta: basins[k].theta,
                phi: basins[k].phi,
                value: basins[k].value,
            })
            .collect(),
        quality: a.quality,
        dual_value: basins[0].value - eta.dot(y0),
        eta: eta.as_slice().to_vec(),
        strategy,
        polish_steps,
    }
}

/// Newton-type equalization of the lowest separated basins. By the
/// envelope theorem a basin value moves with `η` at rate `x_basin`, so the
/// step solves `⟨x_i − x_1, δ⟩ = v_1 − v_i` in the least-norm sense.
fn polish(
    phi: &BoundaryTrace,
    mut eta: Covector,
    strategy: EtaStrategy,
    opts: &TheoremOptions,
) -> Result<EtaCandidate, TheoremError> {
    let scale = phi.atlas.body.diameter().max(1.0);
    for step in 0..POLISH_STEPS {
        let a = assess(phi, &eta, opts)?;
        let basins = &a.solve.basins;
        let mut reps: Vec<usize> = Vec::new();
        for (k, b) in basins.iter().enumerate() {
            if reps.len() < 3 && separated(basins, &reps, b, opts.sep_min) {
                reps.push(k);
            }
        }
        if reps.len() < 2 {
            return Ok(candidate(phi, eta, &a, strategy, step));
        }
        let v: Vec<f64> = reps.iter().map(|&k| basins[k].value).collect();
        let k = if reps.len() == 3 && v[2] - v[0] <= 2.0 * (v[1] - v[0]) + opts.tol_multi { 3 } else { 2 };
        if v[k - 1] - v[0] <= 1e-3 * opts.tol_multi {
            return Ok(candidate(phi, eta, &a, strategy, step));
        }
        let n = eta.len();
        let mut m = DMatrix::zeros(k - 1, n);
        let mut rhs = Covector::zeros(k - 1);
        for r in 1..k {
            let d = &basins[reps[r]].x - &basins[reps[0]].x;
            m.row_mut(r - 1).copy_from(&d.transpose());
            rhs[r - 1] = v[0] - v[r];
        }
        let delta = m.svd(true, true).solve(&rhs, 1e-12).map_err(|e| TheoremError::Unsupported(e.into()))?;
        if !(delta.norm() <= 10.0 * scale) {
            return Ok(candidate(phi, eta, &a, strategy, step));
        }
        eta += delta;
    }
    let a = assess(phi, &eta, opts)?;
    Ok(candidate(phi, eta, &a, strategy, POLISH_STEPS))
}

fn minimax_start(phi: &BoundaryTrace, opts: &TheoremOptions) -> Result<Covector, TheoremError> {
    let atlas = &phi.atlas;
    let n = atlas.body.dim();
    let x: Vec<Point> = atlas.points().cloned().collect();
    let r = opts.eta_radius;
    let grid = YGrid::new(YSet::Box { lo: vec![-r; n], hi: vec![r; n] }, opts.eta_resolution);
    let p = linear_pairing(None, &AffineMap::identity(n), atlas.body.chebyshev_center(), &x, grid, 0.0)?
        .with_offsets(&phi.values)?;
    let y = match find_two_minima_witness(&p, opts.tol_multi, opts.sep_min) {
        Ok(w) => w.y_star,
        Err(MinimaxError::NotFoundAtResolution(near)) => near.y,
        Err(e) => return Err(e.into()),
    };
    Ok(Covector::from_vec(y))
}

/// Stationary-and-equal pairs on a circle: for fixed `θᵢ`, `η(θⱼ)` solves
/// `φ'(θ) + ⟨η, x'(θ)⟩ = 0` at both angles and `θⱼ` is bisected on the
/// value difference. Among the candidates whose pair is globally minimal on
/// the atlas, the one with the largest dual value is returned.
fn pair_equalize(phi: &BoundaryTrace, opts: &TheoremOptions) -> Result<Covector, TheoremError> {
    let atlas = &phi.atlas;
    let Some(chart @ Chart::Circle { radius, .. }) = atlas.closed_curve() else {
        return Err(TheoremError::Unsupported("pair equalization needs a circular boundary".into()));
    };
    let radius = *radius;
    let value = |t: f64| phi_value(phi, 0, t, 0.0, &chart.point(t, 0.0));
    let slope = |t: f64| (value(t + DIFF_STEP) - value(t - DIFF_STEP)) / (2.0 * DIFF_STEP);
    let solve = |ti: f64, tj: f64| -> Option<(Covector, f64)> {
        let (a, b) = (chart.tangent(ti)?, chart.tangent(tj)?);
        let det = a[0] * b[1] - a[1] * b[0];
        if det.abs() < 1e-3 * radius * radius {
            return None;
        }
        let (ra, rb) = (-slope(ti), -slope(tj));
        let eta = Covector::from_vec(vec![(ra * b[1] - rb * a[1]) / det, (a[0] * rb - b[0] * ra) / det]);
        let diff = value(ti) + eta.dot(&chart.point(ti, 0.0)) - value(tj) - eta.dot(&chart.point(tj, 0.0));
        Some((eta, diff))
    };
    let mut cands: Vec<(Covector, f64)> = Vec::new();
    for i in 0..PAIR_ROWS {
        let ti = TAU * i as f64 / PAIR_ROWS as f64;
        let cols: Vec<(f64, Option<(Covector, f64)>)> = (0..PAIR_COLS)
            .map(|j| {
                let tj = ti + TAU * (j as f64 + 0.5) / PAIR_COLS as f64;
                (tj, solve(ti, tj))
            })
            .collect();
        for w in cols.windows(2) {
            let ((ta, Some((ea, ra))), (tb, Some((_, rb)))) = (&w[0], &w[1]) else { continue };
            // A sign change of the determinant means the pair passed through
            // parallel tangents, where the difference jumps.
            if (ta - ti).sin().signum() != (tb - ti).sin().signum() {
                continue;
            }
            if *ra == 0.0 {
                cands.push((ea.clone(), ti));
                continue;
            }
            if ra * rb >= 0.0 {
                continue;
            }
            let (mut lo, mut hi, mut rlo) = (*ta, *tb, *ra);
            for _ in 0..BISECT_STEPS {
                let mid = 0.5 * (lo + hi);
                let Some((_, rm)) = solve(ti, mid) else { break };
                if rm == 0.0 || (rm > 0.0) == (rlo > 0.0) {
                    lo = mid;
                    rlo = rm;
                } else {
                    hi = mid;
                }
            }
            if let Some((e, _)) = solve(ti, 0.5 * (lo + hi)) {
                cands.push((e, ti));
            }
        }
    }
    if cands.is_empty() {
        return Err(TheoremError::NotFound(Box::new(fallback(phi, opts)?)));
    }
    let y0 = atlas.body.chebyshev_center();
    let sample_min = |e: &Covector| {
        atlas.samples.iter().zip(&phi.values).map(|(s, v)| v + e.dot(&s.x)).fold(f64::INFINITY, f64::min)
    };
    // How far the pair sits above the sampled minimum; a pair of maxima can
    // produce the same tilt as a pair of minima, so duplicates keep the
    // smallest slack.
    let mut unique: Vec<(Covector, f64)> = Vec::new();
    for (e, ti) in cands {
        let slack = value(ti) + e.dot(&chart.point(ti, 0.0)) - sample_min(&e);
        match unique.iter_mut().find(|(u, _)| (u - &e).norm() <= 1e-6) {
            Some(u) if slack < u.1 => *u = (e, slack),
            Some(_) => {}
            None => unique.push((e, slack)),
        }
    }
    let mut best: Option<(f64, Covector)> = None;
    let mut near: Option<(f64, Covector)> = None;
    for (e, slack) in &unique {
        if near.as_ref().is_none_or(|(s, _)| slack < s) {
            near = Some((*slack, e.clone()));
        }
        if *slack > opts.tol_multi {
            continue;
        }
        let a = assess(phi, e, opts)?;
        if a.minima.len() < 2 {
            continue;
        }
        let dual = a.solve.basins[0].value - e.dot(y0);
        if best.as_ref().is_none_or(|(d, _)| dual > *d) {
            best = Some((dual, e.clone()));
        }
    }
    Ok(best.or(near).map(|(_, e)| e).expect("non-empty candidate list"))
}

fn fallback(phi: &BoundaryTrace, opts: &TheoremOptions) -> Result<EtaCandidate, TheoremError> {
    let eta = Covector::zeros(phi.atlas.body.dim());
    let a = assess(phi, &eta, opts)?;
    Ok(candidate(phi, eta, &a, EtaStrategy::PairEqualize, 0))
}
