//! Config-driven experiment runner: builds the body, trace and family from a
//! JSON config, dispatches one pipeline and writes its artifacts.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::functions::{
    boundary_trace, make_family, BoundaryTrace, FnSpec, FunctionError, Monomial, Oracle, TraceFamily, TraceSpec,
};
use crate::geometry::{sample_boundary, BoundaryAtlas, ConvexBody, GeometryError, Halfspace};
use crate::minimax::{gap_report, PairingFn, YGrid, YSet};
use crate::oracle::grid_argmin;
use crate::rng::{seeded, split};
use crate::solvers::{
    default_directions, minimize_over_body, write_iterates_csv, SolveError, SolveOptions, SolveResult,
};
use crate::svg::{render, PlotLayers};
use crate::theorems::{
    digest, halfline_counterexample, search_eta, verify_common_gamma, verify_theorem_1_1, verify_theorem_2_5,
    verify_theorem_2_6, verify_theorem_2_7, EtaCandidate, EtaStrategy, ReportStatus, SSpec, Theorem11Input,
    Theorem27Input, TheoremError, TheoremOptions, TheoremReport,
};
use crate::tol::{self, geometric_grid};
use crate::{Covector, Point};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Theorem(#[from] TheoremError),
}

impl From<FunctionError> for RunError {
    fn from(e: FunctionError) -> Self {
        RunError::Theorem(e.into())
    }
}

impl From<GeometryError> for RunError {
    fn from(e: GeometryError) -> Self {
        RunError::Theorem(e.into())
    }
}

impl From<SolveError> for RunError {
    fn from(e: SolveError) -> Self {
        RunError::Theorem(e.into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfspaceSpec {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BodySpec {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Polytope { halfspaces: Vec<HalfspaceSpec> },
    Hull { points: Vec<Vec<f64>> },
    HalfLine { origin: f64, direction: f64 },
}

impl BodySpec {
    pub fn build(&self) -> Result<ConvexBody, GeometryError> {
        match self {
            BodySpec::Ball { center, radius } => ConvexBody::ball(Point::from_column_slice(center), *radius),
            BodySpec::Box { lo, hi } => ConvexBody::cuboid(Point::from_column_slice(lo), Point::from_column_slice(hi)),
            BodySpec::Polytope { halfspaces } => ConvexBody::polytope(
                halfspaces
                    .iter()
                    .map(|h| Halfspace::new(Point::from_column_slice(&h.normal), h.offset))
                    .collect::<Result<_, _>>()?,
            ),
            BodySpec::Hull { points } => {
                ConvexBody::hull(&points.iter().map(|p| Point::from_column_slice(p)).collect::<Vec<_>>())
            }
            BodySpec::HalfLine { origin, direction } => ConvexBody::half_line(*origin, *direction),
        }
    }
}

/// Seeded polynomials of degree ≤ 2 with coefficients in `[−scale, scale]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomPerturbations {
    pub count: usize,
    #[serde(default = "one")]
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub base: FnSpec,
    #[serde(default)]
    pub perturbations: Vec<FnSpec>,
    #[serde(default)]
    pub random_perturbations: Option<RandomPerturbations>,
    pub margin_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolutionSpec {
    /// Boundary atlas samples.
    #[serde(default = "default_boundary")]
    pub boundary: usize,
    #[serde(default = "default_grid")]
    pub sublevel_grid: usize,
}

impl Default for ResolutionSpec {
    fn default() -> Self {
        Self { boundary: default_boundary(), sublevel_grid: default_grid() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_tol_solve")]
    pub tol_solve: f64,
    #[serde(default = "default_iter_cap")]
    pub iter_cap: usize,
    #[serde(default = "default_starts")]
    pub starts: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self { tol_solve: tol::TOL_SOLVE, iter_cap: tol::ITER_CAP, starts: tol::STARTS }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpec {
    #[serde(default = "default_strategy")]
    pub strategy: EtaStrategy,
    /// Skips the search and uses this tilt.
    #[serde(default)]
    pub eta: Option<Vec<f64>>,
    #[serde(default = "default_eta_radius")]
    pub eta_radius: f64,
    #[serde(default = "default_eta_resolution")]
    pub eta_resolution: usize,
    #[serde(default = "default_tol_multi")]
    pub tol_multi: f64,
    #[serde(default = "default_sep")]
    pub sep_min: f64,
}

impl Default for SearchSpec {
    fn default() -> Self {
        Self {
            strategy: default_strategy(),
            eta: None,
            eta_radius: default_eta_radius(),
            eta_resolution: default_eta_resolution(),
            tol_multi: default_tol_multi(),
            sep_min: default_sep(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PipelineSpec {
    SearchEta,
    CommonGamma,
    #[serde(rename = "theorem_1_1")]
    Theorem11 {
        #[serde(default = "default_directions_count")]
        directions: usize,
        #[serde(default = "one")]
        delta_max: f64,
        #[serde(default = "default_delta_min")]
        delta_min: f64,
        #[serde(default = "default_s")]
        s: SSpec,
    },
    #[serde(rename = "theorem_2_5")]
    Theorem25 {
        #[serde(default)]
        i: Option<FnSpec>,
        g: FnSpec,
        #[serde(default = "one")]
        lambda_max: f64,
    },
    #[serde(rename = "theorem_2_6")]
    Theorem26 {
        h: FnSpec,
        #[serde(default = "one")]
        lambda_max: f64,
    },
    #[serde(rename = "theorem_2_7")]
    Theorem27 {
        p: FnSpec,
        mu: f64,
        #[serde(default)]
        q: Option<FnSpec>,
        h: FnSpec,
        #[serde(default = "one")]
        lambda_max: f64,
        #[serde(default)]
        perturbations: Vec<FnSpec>,
        #[serde(default)]
        random_perturbations: Option<RandomPerturbations>,
    },
    Halfline {
        #[serde(default = "default_gammas")]
        gammas: Vec<f64>,
    },
    MinimaxDemo {
        #[serde(default = "default_grid")]
        resolution: usize,
    },
    GridOracle {
        objective: FnSpec,
        #[serde(default = "default_grid")]
        per_axis: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub body: Option<BodySpec>,
    /// Boundary trace `φ`; derived from the family base when absent.
    #[serde(default)]
    pub trace: Option<TraceSpec>,
    #[serde(default)]
    pub family: Option<FamilySpec>,
    #[serde(default)]
    pub resolution: ResolutionSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub search: SearchSpec,
    pub pipeline: PipelineSpec,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}
fn default_boundary() -> usize {
    720
}
fn default_grid() -> usize {
    201
}
fn default_tol_solve() -> f64 {
    tol::TOL_SOLVE
}
fn default_iter_cap() -> usize {
    tol::ITER_CAP
}
fn default_starts() -> usize {
    tol::STARTS
}
fn default_strategy() -> EtaStrategy {
    EtaStrategy::PairEqualize
}
fn default_eta_radius() -> f64 {
    3.0
}
fn default_eta_resolution() -> usize {
    121
}
fn default_tol_multi() -> f64 {
    tol::TOL_MULTI
}
fn default_sep() -> f64 {
    0.1
}
fn default_directions_count() -> usize {
    8
}
fn default_delta_min() -> f64 {
    1e-3
}
fn default_s() -> SSpec {
    SSpec::All
}
fn default_gammas() -> Vec<f64> {
    vec![-2.0, -1.0, 0.0, 1.0, 2.0]
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        serde_json::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text =
            fs::read_to_string(path).map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn theorem_options(&self) -> TheoremOptions {
        TheoremOptions {
            solve: SolveOptions {
                tol_solve: self.solver.tol_solve,
                iter_cap: self.solver.iter_cap,
                starts: self.solver.starts,
                seed: self.seed,
                trace_iterates: false,
            },
            tol_multi: self.search.tol_multi,
            sep_min: self.search.sep_min,
            shift_tol: 1e-8,
            sublevel_grid: self.resolution.sublevel_grid,
            eta_radius: self.search.eta_radius,
            eta_resolution: self.search.eta_resolution,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Replaces the config seed.
    pub seed: Option<u64>,
    /// Also log the iterates of a reference interior solve.
    pub trace_iterates: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: TheoremReport,
    pub summary_csv: String,
    /// `plot.svg` for bounded planar bodies.
    pub plot: Option<String>,
    /// `minimizers.csv` otherwise.
    pub minimizers_csv: Option<String>,
    pub iterates_csv: Option<String>,
}

impl RunOutcome {
    /// `0` verdict true, `2` not found at resolution, `1` otherwise.
    pub fn exit_code(&self) -> i32 {
        match self.report.status {
            ReportStatus::Passed => 0,
            ReportStatus::NotFoundAtResolution => 2,
            ReportStatus::Failed => 1,
        }
    }

    pub fn report_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.report).expect("report serializes");
        s.push('\n');
        s
    }
}

struct Setup {
    body: ConvexBody,
    atlas: Option<Arc<BoundaryAtlas>>,
}

impl Setup {
    fn new(cfg: &ExperimentConfig) -> Result<Self, RunError> {
        let spec = cfg.body.as_ref().ok_or_else(|| RunError::Config("this pipeline needs a body".into()))?;
        let body = spec.build()?;
        let atlas =
            if body.is_half_line() { None } else { Some(Arc::new(sample_boundary(&body, cfg.resolution.boundary)?)) };
        Ok(Self { body, atlas })
    }

    fn atlas(&self) -> Result<Arc<BoundaryAtlas>, RunError> {
        self.atlas.clone().ok_or_else(|| RunError::Config("this pipeline needs a bounded body".into()))
    }

    /// The configured trace, else the restriction of `fallback`.
    fn trace(&self, cfg: &ExperimentConfig, fallback: Option<&Oracle>) -> Result<BoundaryTrace, RunError> {
        let atlas = self.atlas()?;
        match (&cfg.trace, fallback) {
            (Some(t), _) => Ok(BoundaryTrace::from_source(atlas, t.source()?)?),
            (None, Some(f)) => Ok(boundary_trace(f, atlas)),
            (None, None) => Err(RunError::Config("no trace and no function to derive it from".into())),
        }
    }
}

fn random_polynomials(dim: usize, spec: &RandomPerturbations, seed: u64) -> Vec<FnSpec> {
    let mut rng = seeded(split(seed, 0x70));
    let mut powers: Vec<Vec<u32>> = vec![vec![0; dim]];
    for i in 0..dim {
        let mut p = vec![0; dim];
        p[i] = 1;
        powers.push(p);
    }
    for i in 0..dim {
        for j in i..dim {
            let mut p = vec![0; dim];
            p[i] += 1;
            p[j] += 1;
            powers.push(p);
        }
    }
    (0..spec.count)
        .map(|_| FnSpec::Polynomial {
            dim,
            terms: powers
                .iter()
                .map(|p| Monomial { coef: spec.scale * rng.random_range(-1.0..1.0), powers: p.clone() })
                .collect(),
        })
        .collect()
}

fn perturbation_oracles(
    dim: usize,
    listed: &[FnSpec],
    random: Option<&RandomPerturbations>,
    seed: u64,
) -> Result<Vec<Oracle>, RunError> {
    let mut specs = listed.to_vec();
    if let Some(r) = random {
        specs.extend(random_polynomials(dim, r, seed));
    }
    Ok(specs.iter().map(|s| s.oracle()).collect::<Result<_, _>>()?)
}

fn build_family(cfg: &ExperimentConfig, body: &ConvexBody) -> Result<TraceFamily, RunError> {
    let f = cfg.family.as_ref().ok_or_else(|| RunError::Config("this pipeline needs a family".into()))?;
    let base = f.base.builtin()?;
    let qs = perturbation_oracles(body.dim(), &f.perturbations, f.random_perturbations.as_ref(), cfg.seed)?;
    Ok(make_family(body, &base, &qs, f.margin_min, cfg.seed)?)
}

/// The configured tilt, else the searched one.
fn resolve_eta(
    cfg: &ExperimentConfig,
    phi: &BoundaryTrace,
    opts: &TheoremOptions,
) -> Result<(Covector, Option<EtaCandidate>), TheoremError> {
    match &cfg.search.eta {
        Some(e) => Ok((Covector::from_column_slice(e), None)),
        None => {
            let c = search_eta(phi, cfg.search.strategy, opts)?;
            Ok((c.eta(), Some(c)))
        }
    }
}

fn attach(report: &mut TheoremReport, key: &str, value: Value) {
    if let Value::Object(m) = &mut report.details {
        m.insert(key.into(), value);
    } else {
        let mut m = serde_json::Map::new();
        m.insert("pipeline".into(), report.details.take());
        m.insert(key.into(), value);
        report.details = Value::Object(m);
    }
}

fn not_found_report(err: &TheoremError) -> TheoremReport {
    let mut r = TheoremReport::new("search_eta", &json!({}));
    r.notes.push(err.to_string());
    r.details = match err {
        TheoremError::NotFound(c) => json!({ "eta_search": c }),
        TheoremError::Minimax(m) => json!({ "minimax": m.to_string() }),
        _ => Value::Null,
    };
    r.status = ReportStatus::NotFoundAtResolution;
    r
}

fn run_pipeline(cfg: &ExperimentConfig, opts: &TheoremOptions) -> Result<TheoremReport, TheoremError> {
    let setup = || Setup::new(cfg).map_err(into_theorem);
    match &cfg.pipeline {
        PipelineSpec::SearchEta => {
            let s = setup()?;
            let base = cfg.family.as_ref().map(|f| f.base.oracle()).transpose()?;
            let phi = s.trace(cfg, base.as_ref()).map_err(into_theorem)?;
            let c = search_eta(&phi, cfg.search.strategy, opts)?;
            let mut r = TheoremReport::new("search_eta", &json!({ "phi": phi.values, "strategy": c.strategy }));
            r.eta = Some(c.eta.clone());
            r.gamma = Some(c.gamma.clone());
            r.details = json!({ "eta_search": c });
            r.set_verdict(c.is_multi_minimal());
            Ok(r)
        }
        PipelineSpec::CommonGamma => {
            let s = setup()?;
            let family = build_family(cfg, &s.body).map_err(into_theorem)?;
            let phi = s.trace(cfg, Some(family.base().oracle())).map_err(into_theorem)?;
            let (eta, cand) = resolve_eta(cfg, &phi, opts)?;
            let mut r = verify_common_gamma(&phi, &eta, &family, None, opts)?;
            attach(&mut r, "eta_search", json!(cand));
            Ok(r)
        }
        PipelineSpec::Theorem11 { directions, delta_max, delta_min, s: sspec } => {
            let s = setup()?;
            let family = build_family(cfg, &s.body).map_err(into_theorem)?;
            let phi = s.trace(cfg, Some(family.base().oracle())).map_err(into_theorem)?;
            let (eta, cand) = resolve_eta(cfg, &phi, opts)?;
            let dirs = default_directions(s.body.dim(), *directions, split(cfg.seed, 0x11));
            let grid = geometric_grid(*delta_max);
            let input = Theorem11Input {
                phi: &phi,
                family: &family,
                eta: &eta,
                directions: &dirs,
                delta_grid: &grid,
                delta_min: *delta_min,
                s: sspec,
            };
            let mut r = verify_theorem_1_1(&input, opts)?;
            attach(&mut r, "eta_search", json!(cand));
            Ok(r)
        }
        PipelineSpec::Theorem25 { i, g, lambda_max } => {
            let s = setup()?;
            let family = build_family(cfg, &s.body).map_err(into_theorem)?;
            let phi = s.trace(cfg, Some(family.base().oracle())).map_err(into_theorem)?;
            let (eta, cand) = resolve_eta(cfg, &phi, opts)?;
            let i = i.as_ref().map(|f| f.oracle()).transpose()?;
            let g = g.oracle()?;
            let mut r = verify_theorem_2_5(&phi, i.as_ref(), &family, &g, &-eta, *lambda_max, opts)?;
            attach(&mut r, "eta_search", json!(cand));
            Ok(r)
        }
        PipelineSpec::Theorem26 { h, lambda_max } => {
            let s = setup()?;
            let family = build_family(cfg, &s.body).map_err(into_theorem)?;
            let phi = s.trace(cfg, Some(family.base().oracle())).map_err(into_theorem)?;
            let (eta, cand) = resolve_eta(cfg, &phi, opts)?;
            let mut r = verify_theorem_2_6(&phi, &family, &h.oracle()?, &-eta, *lambda_max, opts)?;
            attach(&mut r, "eta_search", json!(cand));
            Ok(r)
        }
        PipelineSpec::Theorem27 { p, mu, q, h, lambda_max, perturbations, random_perturbations } => {
            let s = setup()?;
            let p = p.oracle()?;
            let q = q.as_ref().map(|f| f.oracle()).transpose()?;
            let pq = match &q {
                Some(q) => crate::functions::oracle::sum(p.dim(), vec![(1.0, p.clone()), (1.0, q.clone())]),
                None => p.clone(),
            };
            let phi = s.trace(cfg, Some(&pq)).map_err(into_theorem)?;
            let qs = perturbation_oracles(s.body.dim(), perturbations, random_perturbations.as_ref(), cfg.seed)
                .map_err(into_theorem)?;
            let input = Theorem27Input {
                phi: &phi,
                p: &p,
                mu: *mu,
                q: q.as_ref(),
                h: &h.oracle()?,
                lambda_max: *lambda_max,
                perturbations: &qs,
            };
            verify_theorem_2_7(&input, opts)
        }
        PipelineSpec::Halfline { gammas } => halfline_counterexample(gammas, opts),
        PipelineSpec::MinimaxDemo { resolution } => Ok(minimax_demo(*resolution, opts)),
        PipelineSpec::GridOracle { objective, per_axis } => {
            let s = setup()?;
            let f = objective.oracle()?;
            let grid = grid_argmin(f.as_ref(), &s.body, *per_axis)?;
            let solve = minimize_over_body(f.as_ref(), &s.body, &opts.solve)?;
            let dist = (&solve.x_star - &grid.x).norm();
            let agree = dist <= 2.0 * grid.spacing && (solve.value - grid.value).abs() <= 1e-3;
            let mut r = TheoremReport::new("grid_oracle", &json!({ "objective": objective, "per_axis": per_axis }));
            r.details = json!({ "grid": grid, "solver": solve, "distance": dist, "agree": agree });
            r.set_verdict(agree);
            Ok(r)
        }
    }
}

fn into_theorem(e: RunError) -> TheoremError {
    match e {
        RunError::Theorem(t) => t,
        other => TheoremError::Precondition(other.to_string()),
    }
}

/// The `(x − y)²` instance on `X = {−1, 1}`, `Y = [−1, 1]`.
pub fn minimax_demo(resolution: usize, opts: &TheoremOptions) -> TheoremReport {
    let p = PairingFn::general(
        |x: &Point, y: &Point| (x[0] - y[0]).powi(2),
        vec![Point::from_element(1, -1.0), Point::from_element(1, 1.0)],
        YGrid::new(YSet::Box { lo: vec![-1.0], hi: vec![1.0] }, resolution),
    )
    .expect("non-empty X");
    let g = gap_report(&p, opts.tol_multi, p.default_sep());
    let mut r = TheoremReport::new("minimax_demo", &json!({ "resolution": resolution, "tol_multi": opts.tol_multi }));
    r.details = json!({ "gap": g, "grid_step": p.y.steps()[0] });
    r.set_verdict(g.strict_gap && g.witness.is_some());
    r
}

/// Runs the configured pipeline. Resolution-limited searches give a report
/// with status `not_found_at_resolution`; other failures are errors.
pub fn run_experiment(cfg: &ExperimentConfig, run: &RunOptions) -> Result<RunOutcome, RunError> {
    let mut cfg = cfg.clone();
    if let Some(s) = run.seed {
        cfg.seed = s;
    }
    let opts = cfg.theorem_options();
    let mut report = match run_pipeline(&cfg, &opts) {
        Ok(r) => r,
        Err(e) if e.is_resolution_limited() => not_found_report(&e),
        Err(e) => return Err(e.into()),
    };
    let config_value = serde_json::to_value(&cfg).expect("config serializes");
    report.inputs_digest = digest(&config_value);

    let summary_csv = summary_csv(&report);
    let (plot, minimizers_csv) = artifacts(&cfg, &report)?;
    let iterates_csv = if run.trace_iterates { Some(iterates(&cfg, &opts, &report)?) } else { None };
    Ok(RunOutcome { report, summary_csv, plot, minimizers_csv, iterates_csv })
}

fn num(v: Option<f64>) -> String {
    v.map(|x| serde_json::to_string(&x).expect("finite or null")).unwrap_or_default()
}

/// One row per member; numbers are printed exactly as in `report.json`.
pub fn summary_csv(report: &TheoremReport) -> String {
    let mut out = String::from("index,alpha,interior_inf,boundary_inf,margin,eps_hat,delta_hats,passed\n");
    for m in &report.members {
        let deltas: Vec<String> = m.delta_hats.iter().map(|d| num(Some(*d))).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            m.index,
            num(Some(m.alpha)),
            num(m.interior_inf),
            num(m.boundary_inf),
            num(m.margin),
            num(m.eps_hat),
            deltas.join(";"),
            m.passed
        ));
    }
    out
}

fn points_at(v: &Value, path: &[&str], field: &str) -> Vec<Vec<f64>> {
    let mut cur = v;
    for k in path {
        cur = &cur[*k];
    }
    cur.as_array()
        .map(|a| a.iter().filter_map(|e| serde_json::from_value(e[field].clone()).ok()).collect())
        .unwrap_or_default()
}

/// Interior minimizers recorded by the pipeline, in member order.
fn interior_points(report: &TheoremReport) -> Vec<Vec<f64>> {
    let d = &report.details;
    let direct = points_at(d, &["members"], "interior_x");
    if !direct.is_empty() {
        return direct;
    }
    let nested = points_at(d, &["common_gamma", "members"], "interior_x");
    if !nested.is_empty() {
        return nested;
    }
    let grid = &d["grid"]["x"];
    serde_json::from_value(grid.clone()).map(|x| vec![x]).unwrap_or_default()
}

fn artifacts(cfg: &ExperimentConfig, report: &TheoremReport) -> Result<(Option<String>, Option<String>), RunError> {
    let interior = interior_points(report);
    let body = match cfg.body.as_ref().map(|b| b.build()).transpose()? {
        Some(b) if b.dim() == 2 && b.is_bounded() => b,
        _ => {
            let mut csv = String::from("index,x\n");
            for (k, x) in interior.iter().enumerate() {
                let coords: Vec<String> = x.iter().map(|c| num(Some(*c))).collect();
                csv.push_str(&format!("{k},{}\n", coords.join(";")));
            }
            return Ok((None, Some(csv)));
        }
    };
    let trace = match (&cfg.trace, cfg.family.as_ref()) {
        (Some(_), _) | (None, Some(_)) => {
            let setup = Setup::new(cfg)?;
            let fallback = cfg.family.as_ref().map(|f| f.base.oracle()).transpose()?;
            setup.trace(cfg, fallback.as_ref()).ok()
        }
        _ => None,
    };
    let d = &report.details;
    let mut minima = points_at(d, &["eta_search", "boundary_minima"], "x");
    if minima.is_empty() {
        minima = points_at(d, &["details", "eta_search", "boundary_minima"], "x");
    }
    let path: Vec<Vec<f64>> = serde_json::from_value(d["sweeps"][0]["path"].clone()).unwrap_or_default();
    let layers = PlotLayers { minima, interior, path, title: report.theorem_id.clone() };
    Ok((Some(render(&body, trace.as_ref(), &layers)?), None))
}

/// Iterates of a reference solve: the base member tilted by `η` when the
/// report carries one, else the grid-oracle objective.
fn iterates(cfg: &ExperimentConfig, opts: &TheoremOptions, report: &TheoremReport) -> Result<String, RunError> {
    let body = cfg.body.as_ref().map(|b| b.build()).transpose()?;
    let f: Option<Oracle> = match (&cfg.pipeline, &cfg.family) {
        (PipelineSpec::GridOracle { objective, .. }, _) => Some(objective.oracle()?),
        (_, Some(fam)) => {
            let base = fam.base.oracle()?;
            Some(match &report.eta {
                Some(e) => crate::functions::oracle::tilt(base, &Covector::from_column_slice(e)),
                None => base,
            })
        }
        _ => None,
    };
    let mut buf = Vec::new();
    match (f, body) {
        (Some(f), Some(body)) => {
            let solve_opts = SolveOptions { trace_iterates: true, ..opts.solve.clone() };
            let r: SolveResult = minimize_over_body(f.as_ref(), &body, &solve_opts)?;
            write_iterates_csv(&mut buf, &r.trace)?;
        }
        _ => write_iterates_csv(&mut buf, &[])?,
    }
    Ok(String::from_utf8(buf).expect("ascii"))
}

fn write_atomic(dir: &Path, name: &str, content: &str) -> std::io::Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(content.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(tmp, dir.join(name))
}

/// Writes every artifact of the run into `dir`; returns the written names.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path) -> Result<Vec<String>, RunError> {
    fs::create_dir_all(dir)?;
    let mut files = vec![("report.json", outcome.report_json()), ("summary.csv", outcome.summary_csv.clone())];
    if let Some(p) = &outcome.plot {
        files.push(("plot.svg", p.clone()));
    }
    if let Some(m) = &outcome.minimizers_csv {
        files.push(("minimizers.csv", m.clone()));
    }
    if let Some(i) = &outcome.iterates_csv {
        files.push(("iterates.csv", i.clone()));
    }
    for (name, content) in &files {
        write_atomic(dir, name, content)?;
    }
    Ok(files.into_iter().map(|(n, _)| n.to_string()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_config(pipeline: &str) -> String {
        format!(
            r#"{{
                "seed": 3,
                "body": {{"type": "ball", "center": [0, 0], "radius": 1}},
                "trace": {{"type": "trig", "cos": [1]}},
                "family": {{
                    "base": {{"type": "trig_lift", "cos": [1], "c": 1.0}},
                    "random_perturbations": {{"count": 3}},
                    "margin_min": 0.25
                }},
                "resolution": {{"boundary": 360, "sublevel_grid": 61}},
                "pipeline": {pipeline}
            }}"#
        )
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = r#"{"seed": 1, "pipeline": {"type": "halfline"}, "colour": 3}"#;
        assert!(matches!(ExperimentConfig::from_json(bad), Err(RunError::Config(_))));
        let bad = r#"{"seed": 1, "pipeline": {"type": "nope"}}"#;
        assert!(ExperimentConfig::from_json(bad).is_err());
        let missing_seed = r#"{"pipeline": {"type": "halfline"}}"#;
        assert!(ExperimentConfig::from_json(missing_seed).is_err());
    }

    #[test]
    fn random_perturbations_are_seeded() {
        let spec = RandomPerturbations { count: 4, scale: 0.5 };
        let a = random_polynomials(2, &spec, 9);
        assert_eq!(a, random_polynomials(2, &spec, 9));
        assert_ne!(a, random_polynomials(2, &spec, 10));
        let FnSpec::Polynomial { terms, .. } = &a[0] else { panic!() };
        // 1, x, y, x², xy, y².
        assert_eq!(terms.len(), 6);
        assert!(terms.iter().all(|t| t.coef.abs() <= 0.5));
    }

    #[test]
    fn common_gamma_run_writes_consistent_summary() {
        let cfg = ExperimentConfig::from_json(&disk_config(r#"{"type": "common_gamma"}"#)).unwrap();
        let out = run_experiment(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(out.exit_code(), 0, "{:#?}", out.report.members);
        assert_eq!(out.report.members.len(), 4);
        let eta = out.report.eta.clone().unwrap();
        assert!((eta[0] + 1.0).abs() < 1e-6 && eta[1].abs() < 1e-6);
        let json = out.report_json();
        // Every summary number also appears in the report.
        for line in out.summary_csv.lines().skip(1) {
            for cell in line.split(',').skip(1).take(5).filter(|c| !c.is_empty()) {
                assert!(json.contains(cell), "{cell} missing from report");
            }
        }
        let plot = out.plot.as_ref().unwrap();
        assert_eq!(plot.matches("r=\"2.5\"").count(), 4);
        assert!(out.minimizers_csv.is_none());
    }

    #[test]
    fn runs_are_reproducible_and_seed_sensitive() {
        let cfg = ExperimentConfig::from_json(&disk_config(r#"{"type": "common_gamma"}"#)).unwrap();
        let a = run_experiment(&cfg, &RunOptions::default()).unwrap();
        let b = run_experiment(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(a.report_json(), b.report_json());
        let c = run_experiment(&cfg, &RunOptions { seed: Some(4), ..RunOptions::default() }).unwrap();
        assert_ne!(a.report.inputs_digest, c.report.inputs_digest);
    }

    #[test]
    fn minimax_demo_report() {
        let r = minimax_demo(201, &TheoremOptions::default());
        assert!(r.verdict);
        assert_eq!(r.details["gap"]["inf_sup"], 4.0);
        assert_eq!(r.details["gap"]["witness"]["y_star"][0], 0.0);
    }

    #[test]
    fn halfline_run_has_no_plot() {
        let cfg = ExperimentConfig::from_json(r#"{"seed": 0, "pipeline": {"type": "halfline"}}"#).unwrap();
        let out = run_experiment(&cfg, &RunOptions { trace_iterates: true, ..RunOptions::default() }).unwrap();
        assert_eq!(out.exit_code(), 0);
        assert!(out.plot.is_none());
        assert_eq!(out.minimizers_csv.as_deref(), Some("index,x\n"));
        assert!(out.report.notes[0].starts_with("convex boundary"));
        assert_eq!(out.iterates_csv.as_deref(), Some("iteration,value,residual\n"));
    }

    #[test]
    fn grid_oracle_on_the_disk() {
        let cfg = ExperimentConfig::from_json(
            r#"{"seed": 0, "body": {"type": "ball", "center": [0, 0], "radius": 1},
                "pipeline": {"type": "grid_oracle", "objective":
                    {"type": "linear_plus_quadratic", "a": [-1, 0], "c": 1}}}"#,
        )
        .unwrap();
        let out = run_experiment(&cfg, &RunOptions { trace_iterates: true, ..RunOptions::default() }).unwrap();
        assert_eq!(out.exit_code(), 0);
        assert_eq!(out.report.details["grid"]["x"], json!([0.5, 0.0]));
        assert!(out.iterates_csv.unwrap().lines().count() > 1);
    }

    #[test]
    fn theorem_2_7_rejects_small_mu() {
        let cfg = ExperimentConfig::from_json(
            r#"{"seed": 0, "body": {"type": "ball", "center": [0, 0], "radius": 1},
                "resolution": {"boundary": 360},
                "pipeline": {"type": "theorem_2_7", "p": {"type": "sine", "dim": 2, "coord": 0},
                    "mu": 0.5, "h": {"type": "radial_barrier", "center": [0, 0]}}}"#,
        )
        .unwrap();
        let err = run_experiment(&cfg, &RunOptions::default()).unwrap_err();
        assert!(err.to_string().contains("precondition"), "{err}");
    }

    #[test]
    fn outputs_are_written() {
        let dir = std::env::temp_dir().join(format!("tracelab-exp-{}", std::process::id()));
        let cfg = ExperimentConfig::from_json(r#"{"seed": 0, "pipeline": {"type": "minimax_demo"}}"#).unwrap();
        let out = run_experiment(&cfg, &RunOptions::default()).unwrap();
        let names = write_outputs(&out, &dir).unwrap();
        assert_eq!(names, ["report.json", "summary.csv", "minimizers.csv"]);
        let text = fs::read_to_string(dir.join("report.json")).unwrap();
        assert!(text.contains("\"schema\": 1"));
        assert!(!dir.join(".report.json.tmp").exists());
        fs::remove_dir_all(dir).unwrap();
    }
}
