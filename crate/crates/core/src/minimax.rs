//! Finite minimax problems `g: X × Y → R` on a point set `X` and a grid
//! over a convex parameter set `Y`: gaps, two-minima witnesses, and the
//! linear pairing `g(x, η) = I(x) + ⟨η, ψ(x) − y₀⟩`.

use std::fmt;
use std::sync::Arc;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::functions::SmoothFn;
use crate::tol::TOL_GAP_REL;
use crate::{DMatrix, Point};

#[derive(Debug, Error)]
pub enum MinimaxError {
    #[error("no strict gap: sup_inf = {sup_inf}, inf_sup = {inf_sup}")]
    NoStrictGap { sup_inf: f64, inf_sup: f64 },
    #[error("no two-minima witness at this resolution (best second gap {:e})", .0.second_gap)]
    NotFoundAtResolution(NearWitness),
    #[error("invalid pairing: {0}")]
    InvalidPairing(String),
}

/// Convex parameter set `Y`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum YSet {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl YSet {
    pub fn dim(&self) -> usize {
        match self {
            YSet::Box { lo, .. } => lo.len(),
            YSet::Ball { center, .. } => center.len(),
        }
    }

    pub fn contains(&self, y: &Point) -> bool {
        match self {
            YSet::Box { lo, hi } => (0..y.len()).all(|i| y[i] >= lo[i] - 1e-12 && y[i] <= hi[i] + 1e-12),
            YSet::Ball { center, radius } => (y - Point::from_column_slice(center)).norm() <= radius * (1.0 + 1e-12),
        }
    }

    /// The set dilated by `factor` about its center.
    pub fn scaled(&self, factor: f64) -> YSet {
        match self {
            YSet::Box { lo, hi } => {
                let mid: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| (l + h) / 2.0).collect();
                YSet::Box {
                    lo: lo.iter().zip(&mid).map(|(l, m)| m + (l - m) * factor).collect(),
                    hi: hi.iter().zip(&mid).map(|(h, m)| m + (h - m) * factor).collect(),
                }
            }
            YSet::Ball { center, radius } => YSet::Ball { center: center.clone(), radius: radius * factor },
        }
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            YSet::Box { lo, hi } => (lo.clone(), hi.clone()),
            YSet::Ball { center, radius } => {
                (center.iter().map(|c| c - radius).collect(), center.iter().map(|c| c + radius).collect())
            }
        }
    }
}

/// Tensor grid with `resolution` points per axis, restricted to the set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct YGrid {
    pub set: YSet,
    pub resolution: usize,
}

impl YGrid {
    pub fn new(set: YSet, resolution: usize) -> Self {
        Self { set, resolution }
    }

    /// Per-axis grid step.
    pub fn steps(&self) -> Vec<f64> {
        let (lo, hi) = self.set.bounds();
        lo.iter().zip(&hi).map(|(l, h)| (h - l) / (self.resolution.max(2) - 1) as f64).collect()
    }

    pub fn points(&self) -> Vec<Point> {
        let (lo, hi) = self.set.bounds();
        let m = lo.len();
        let r = self.resolution.max(2);
        let steps = self.steps();
        let total = r.pow(m as u32);
        (0..total)
            .map(|mut k| {
                Point::from_iterator(
                    m,
                    (0..m).map(|i| {
                        let j = k % r;
                        k /= r;
                        if j == r - 1 {
                            hi[i]
                        } else {
                            lo[i] + steps[i] * j as f64
                        }
                    }),
                )
            })
            .filter(|y| self.set.contains(y))
            .collect()
    }
}

type GeneralFn = Arc<dyn Fn(&Point, &Point) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    /// `g(xᵢ, η) = cᵢ + ⟨η, dᵢ⟩`.
    Linear {
        c: Vec<f64>,
        d: Vec<Point>,
    },
    General(GeneralFn),
}

/// A finite minimax instance.
#[derive(Clone)]
pub struct PairingFn {
    kind: Kind,
    pub x: Vec<Point>,
    pub y: YGrid,
    /// Convex-combination weights of `y₀` over `ψ(X)` for linear pairings.
    pub combination: Vec<(usize, f64)>,
}

impl fmt::Debug for PairingFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PairingFn")
            .field("linear", &matches!(self.kind, Kind::Linear { .. }))
            .field("x", &self.x.len())
            .field("y", &self.y)
            .finish()
    }
}

impl PairingFn {
    pub fn general(
        g: impl Fn(&Point, &Point) -> f64 + Send + Sync + 'static,
        x: Vec<Point>,
        y: YGrid,
    ) -> Result<Self, MinimaxError> {
        if x.is_empty() {
            return Err(MinimaxError::InvalidPairing("empty X".into()));
        }
        Ok(Self { kind: Kind::General(Arc::new(g)), x, y, combination: Vec::new() })
    }

    /// Adds `offsets[i]` to `g(xᵢ, ·)` (e.g. a boundary trace `φ`).
    pub fn with_offsets(mut self, offsets: &[f64]) -> Result<Self, MinimaxError> {
        if offsets.len() != self.x.len() {
            return Err(MinimaxError::InvalidPairing("offset count differs from |X|".into()));
        }
        match &mut self.kind {
            Kind::Linear { c, .. } => c.iter_mut().zip(offsets).for_each(|(c, o)| *c += o),
            Kind::General(g) => {
                let inner = g.clone();
                let xs = self.x.clone();
                let offs = offsets.to_vec();
                self.kind = Kind::General(Arc::new(move |x: &Point, y: &Point| {
                    let i = xs.iter().position(|p| p == x).expect("x is a pairing point");
                    inner(x, y) + offs[i]
                }));
            }
        }
        Ok(self)
    }

    /// Same instance over another parameter grid.
    pub fn with_grid(&self, y: YGrid) -> Self {
        Self { y, ..self.clone() }
    }

    pub fn value(&self, i: usize, y: &Point) -> f64 {
        match &self.kind {
            Kind::Linear { c, d } => c[i] + d[i].dot(y),
            Kind::General(g) => g(&self.x[i], y),
        }
    }

    fn column(&self, y: &Point) -> Vec<f64> {
        (0..self.x.len()).map(|i| self.value(i, y)).collect()
    }

    /// `0.05 · diameter(X)`.
    pub fn default_sep(&self) -> f64 {
        let mut d: f64 = 0.0;
        for a in &self.x {
            for b in &self.x {
                d = d.max((a - b).norm());
            }
        }
        0.05 * d
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Gap {
    pub sup_inf: f64,
    pub inf_sup: f64,
}

impl Gap {
    pub fn strict(&self) -> bool {
        self.sup_inf < self.inf_sup - TOL_GAP_REL * (1.0 + self.inf_sup.abs())
    }
}

/// Exact extrema over `X × Y-grid`.
pub fn compute_gap(p: &PairingFn) -> Gap {
    let n = p.x.len();
    let ys = p.y.points();
    let identity = || (f64::NEG_INFINITY, vec![f64::NEG_INFINITY; n]);
    let (sup_inf, maxes) = ys
        .par_iter()
        .fold(identity, |(s, mut mx), y| {
            let col = p.column(y);
            mx.iter_mut().zip(&col).for_each(|(m, v)| *m = m.max(*v));
            (s.max(col.iter().copied().fold(f64::INFINITY, f64::min)), mx)
        })
        .reduce(identity, |(a, ma), (b, mb)| (a.max(b), ma.iter().zip(&mb).map(|(x, y)| x.max(*y)).collect()));
    Gap { sup_inf, inf_sup: maxes.into_iter().fold(f64::INFINITY, f64::min) }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub y_star: Vec<f64>,
    pub minima: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    pub sup_inf: f64,
    pub inf_sup: f64,
    pub strict_gap: bool,
    pub witness: Option<Witness>,
}

/// Best candidate when no witness exists at the current resolution.
#[derive(Clone, Debug, Serialize)]
pub struct NearWitness {
    pub y: Vec<f64>,
    pub min_value: f64,
    /// Smallest value above the minimum among points at least `sep_min`
    /// away from the argmin.
    pub second_gap: f64,
    pub minima: Vec<Vec<f64>>,
}

struct Section {
    y: Point,
    min: f64,
    /// Greedy `sep_min`-separated points within `tol_multi` of the minimum.
    minima: Vec<usize>,
    second_gap: f64,
}

fn section(p: &PairingFn, y: Point, tol_multi: f64, sep_min: f64) -> Section {
    let v = p.column(&y);
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    let min = v[order[0]];
    let mut minima: Vec<usize> = Vec::new();
    for &i in order.iter().take_while(|&&i| v[i] <= min + tol_multi) {
        if minima.iter().all(|&j| (&p.x[i] - &p.x[j]).norm() >= sep_min) {
            minima.push(i);
        }
    }
    let arg = &p.x[order[0]];
    let second_gap =
        order.iter().skip(1).find(|&&i| (&p.x[i] - arg).norm() >= sep_min).map_or(f64::INFINITY, |&i| v[i] - min);
    Section { y, min, minima, second_gap }
}

fn to_witness(p: &PairingFn, s: &Section) -> Witness {
    Witness {
        y_star: s.y.as_slice().to_vec(),
        minima: s.minima.iter().map(|&i| p.x[i].as_slice().to_vec()).collect(),
        values: s.minima.iter().map(|&i| p.value(i, &s.y)).collect(),
    }
}

const REFINE_LEVELS: usize = 3;
const REFINE_FACTOR: f64 = 4.0;
const REFINE_TOP: usize = 10;

/// Scans the Y grid for a parameter whose section has at least two
/// separated global minima, refining locally around the ten best
/// candidates when the coarse grid has none. Among the sections of maximal
/// multiplicity the one with the largest minimum value wins (the first one
/// on ties).
pub fn find_two_minima_witness(p: &PairingFn, tol_multi: f64, sep_min: f64) -> Result<Witness, MinimaxError> {
    let gap = compute_gap(p);
    if !gap.strict() {
        return Err(MinimaxError::NoStrictGap { sup_inf: gap.sup_inf, inf_sup: gap.inf_sup });
    }
    witness_search(p, tol_multi, sep_min)
}

pub(crate) fn witness_search(p: &PairingFn, tol_multi: f64, sep_min: f64) -> Result<Witness, MinimaxError> {
    let pick = |secs: &[Section]| -> Option<Witness> {
        let best = secs.iter().map(|s| s.minima.len()).max()?;
        let top = secs
            .iter()
            .filter(|s| s.minima.len() == best)
            .reduce(|a, b| if b.min > a.min { b } else { a })
            .expect("max exists");
        (best >= 2).then(|| to_witness(p, top))
    };
    let coarse: Vec<Section> = p.y.points().into_par_iter().map(|y| section(p, y, tol_multi, sep_min)).collect();
    if coarse.is_empty() {
        return Err(MinimaxError::InvalidPairing("empty Y grid".into()));
    }
    if let Some(w) = pick(&coarse) {
        return Ok(w);
    }
    let mut order: Vec<usize> = (0..coarse.len()).collect();
    order.sort_by(|&a, &b| coarse[a].second_gap.total_cmp(&coarse[b].second_gap).then(a.cmp(&b)));
    let m = p.y.set.dim();
    let mut centers: Vec<Point> = order.iter().take(REFINE_TOP).map(|&k| coarse[k].y.clone()).collect();
    let mut steps = p.y.steps();
    let mut best_near = &coarse[order[0]];
    let mut refined_best: Option<Section> = None;
    for _ in 0..REFINE_LEVELS {
        steps.iter_mut().for_each(|s| *s /= REFINE_FACTOR);
        let offsets: Vec<Point> = local_offsets(m, &steps);
        let mut level: Vec<Section> = Vec::new();
        let mut next = Vec::with_capacity(centers.len());
        for c in &centers {
            let secs: Vec<Section> = offsets
                .par_iter()
                .map(|o| c + o)
                .filter(|y| p.y.set.contains(y))
                .map(|y| section(p, y, tol_multi, sep_min))
                .collect();
            let local_best = secs
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.second_gap.total_cmp(&b.1.second_gap).then(a.0.cmp(&b.0)))
                .map(|(k, _)| k);
            if let Some(k) = local_best {
                next.push(secs[k].y.clone());
            }
            level.extend(secs);
        }
        if let Some(w) = pick(&level) {
            return Ok(w);
        }
        if let Some(s) = level
            .into_iter()
            .min_by(|a, b| a.second_gap.total_cmp(&b.second_gap))
            .filter(|s| s.second_gap < refined_best.as_ref().map_or(best_near.second_gap, |r| r.second_gap))
        {
            refined_best = Some(s);
        }
        centers = next;
    }
    if let Some(r) = refined_best.as_ref() {
        best_near = r;
    }
    Err(MinimaxError::NotFoundAtResolution(NearWitness {
        y: best_near.y.as_slice().to_vec(),
        min_value: best_near.min,
        second_gap: best_near.second_gap,
        minima: best_near.minima.iter().map(|&i| p.x[i].as_slice().to_vec()).collect(),
    }))
}

/// `{−4, …, 4}^m` scaled by `steps`.
fn local_offsets(m: usize, steps: &[f64]) -> Vec<Point> {
    let r = 9usize;
    (0..r.pow(m as u32))
        .map(|mut k| {
            Point::from_iterator(
                m,
                (0..m).map(|i| {
                    let j = (k % r) as f64 - 4.0;
                    k /= r;
                    j * steps[i]
                }),
            )
        })
        .collect()
}

/// Full gap report: extrema plus a witness when the gap is strict and one
/// exists at this resolution.
pub fn gap_report(p: &PairingFn, tol_multi: f64, sep_min: f64) -> GapReport {
    let gap = compute_gap(p);
    let witness = if gap.strict() { witness_search(p, tol_multi, sep_min).ok() } else { None };
    GapReport { sup_inf: gap.sup_inf, inf_sup: gap.inf_sup, strict_gap: gap.strict(), witness }
}

/// Affine map `ψ(x) = A x + b`.
#[derive(Clone, Debug)]
pub struct AffineMap {
    pub a: DMatrix<f64>,
    pub b: Point,
}

impl AffineMap {
    pub fn identity(n: usize) -> Self {
        Self { a: DMatrix::identity(n, n), b: Point::zeros(n) }
    }

    pub fn apply(&self, x: &Point) -> Point {
        &self.a * x + &self.b
    }
}

/// Weights `λ ≥ 0`, `Σλ = 1`, `Σ λᵢ pᵢ = y` when `y ∈ conv(points)`.
pub fn convex_combination(points: &[Point], y: &Point) -> Option<Vec<(usize, f64)>> {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = points.iter().map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let ones: Vec<_> = vars.iter().map(|&v| (v, 1.0)).collect();
    lp.add_constraint(ones.as_slice(), ComparisonOp::Eq, 1.0);
    for k in 0..y.len() {
        let row: Vec<_> = vars.iter().zip(points).map(|(&v, p)| (v, p[k])).collect();
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, y[k]);
    }
    let sol = lp.solve().ok()?;
    Some(vars.iter().enumerate().map(|(i, &v)| (i, sol[v])).filter(|(_, w)| *w > 1e-12).collect())
}

/// `g(x, η) = I(x) + ⟨η, ψ(x) − y₀⟩` over `X × Y`. Requires
/// `y₀ ∈ conv ψ(X)` and `dist(y₀, ψ(X)) ≥ sep`.
pub fn linear_pairing(
    i: Option<&dyn SmoothFn>,
    psi: &AffineMap,
    y0: &Point,
    x: &[Point],
    y: YGrid,
    sep: f64,
) -> Result<PairingFn, MinimaxError> {
    if x.is_empty() {
        return Err(MinimaxError::InvalidPairing("empty X".into()));
    }
    if psi.a.ncols() != x[0].len() || psi.a.nrows() != y0.len() || y.set.dim() != y0.len() {
        return Err(MinimaxError::InvalidPairing("dimensions of ψ, y₀ and Y disagree".into()));
    }
    let images: Vec<Point> = x.iter().map(|p| psi.apply(p)).collect();
    let dist = images.iter().map(|p| (p - y0).norm()).fold(f64::INFINITY, f64::min);
    if dist < sep {
        return Err(MinimaxError::InvalidPairing(format!("y₀ lies within {dist:e} of ψ(X)")));
    }
    let combination = convex_combination(&images, y0)
        .ok_or_else(|| MinimaxError::InvalidPairing("y₀ is not in the convex hull of ψ(X)".into()))?;
    let c = x.iter().map(|p| i.map_or(0.0, |f| f.value(p))).collect();
    let d = images.iter().map(|p| p - y0).collect();
    Ok(PairingFn { kind: Kind::Linear { c, d }, x: x.to_vec(), y, combination })
}

/// Grid surrogates of condition (iii): `min_X max_Y g` and
/// `max_Y min_A g`.
#[derive(Clone, Debug, Serialize)]
pub struct Conditions22 {
    pub inf_sup: f64,
    pub finite_bound: f64,
    pub m_large: f64,
    pub passed: bool,
}

pub fn verify_22_conditions(p: &PairingFn, a: &[usize], m_large: f64) -> Result<Conditions22, MinimaxError> {
    if a.is_empty() || a.iter().any(|&k| k >= p.x.len()) {
        return Err(MinimaxError::InvalidPairing("A must be a non-empty subset of X".into()));
    }
    let gap = compute_gap(p);
    let finite_bound =
        p.y.points()
            .par_iter()
            .map(|y| a.iter().map(|&k| p.value(k, y)).fold(f64::INFINITY, f64::min))
            .reduce(|| f64::NEG_INFINITY, f64::max);
    Ok(Conditions22 {
        inf_sup: gap.inf_sup,
        finite_bound,
        m_large,
        passed: gap.inf_sup >= m_large && finite_bound.is_finite(),
    })
}

/// `min_X max_Y g` on `Y` and on `Y` dilated by `factor`; linear growth in
/// the radius stands in for `inf_X sup_Y g = +∞`.
pub fn sup_growth(p: &PairingFn, factor: f64) -> (f64, f64) {
    let wide = p.with_grid(YGrid::new(p.y.set.scaled(factor), p.y.resolution));
    (compute_gap(p).inf_sup, compute_gap(&wide).inf_sup)
}
