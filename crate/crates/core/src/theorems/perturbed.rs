use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::search::{search_eta, EtaStrategy};
use super::verify::{family_inputs, options_inputs, verify_common_gamma, with_i};
use super::{TheoremError, TheoremOptions, TheoremReport};
use crate::functions::oracle::{sum, tilt};
use crate::functions::{
    boundary_trace, is_constant_shift, make_family, strict_margin, BoundaryTrace, ConvexMeta, FnSpec, Oracle,
    SmoothConvexFn, SmoothFn, TraceFamily,
};
use crate::geometry::{sample_boundary, ConvexBody, Membership, Shape};
use crate::rng::{seeded, split, unit_vector};
use crate::solvers::{check_sublevel, lambda_sweep, SolveResult, SublevelVerdict};
use crate::tol::TOL_GEOM;
use crate::{Covector, Point};

#[derive(Clone, Debug, Serialize)]
pub struct MemberSweep {
    pub index: usize,
    pub sigma: f64,
    pub sublevel: SublevelVerdict,
    pub lambda_grid: Vec<f64>,
    pub success: Vec<bool>,
    pub residuals: Vec<f64>,
    pub eps_hat: f64,
    pub eps_hat_open: f64,
    pub lambda0_ok: bool,
    pub degenerate: bool,
    pub lambda0: SolveResult,
    /// Minimizer for each grid `λ`.
    pub path: Vec<Vec<f64>>,
}

fn sweep_inputs(
    theorem: &str,
    phi: &BoundaryTrace,
    family: &TraceFamily,
    gamma: &Covector,
    lambda_max: f64,
    opts: &TheoremOptions,
) -> serde_json::Value {
    json!({
        "theorem": theorem,
        "phi": phi.values,
        "gamma": gamma.as_slice(),
        "lambda_max": lambda_max,
        "family": family_inputs(family),
        "options": options_inputs(opts),
    })
}

/// Sublevel check at `σ = (interior_inf + boundary_inf)/2` followed by a
/// λ-sweep of `∇(I + J) + λ∇G = γ̃` confined to `{I + J − ⟨γ̃, ·⟩ < σ}`.
pub fn verify_theorem_2_5(
    phi: &BoundaryTrace,
    i: Option<&Oracle>,
    family: &TraceFamily,
    g: &Oracle,
    gamma: &Covector,
    lambda_max: f64,
    opts: &TheoremOptions,
) -> Result<TheoremReport, TheoremError> {
    let eta = -gamma;
    let common = verify_common_gamma(phi, &eta, family, i, opts)?;
    if !common.verdict {
        return Err(TheoremError::SigmaUnavailable);
    }
    let body = &family.body;
    let sweeps: Result<Vec<MemberSweep>, TheoremError> = family
        .members
        .par_iter()
        .zip(&common.members)
        .map(|(m, c)| {
            let sigma = 0.5 * (c.interior_inf.expect("set") + c.boundary_inf.expect("set"));
            let b = with_i(i, m.function.oracle());
            let sublevel = check_sublevel(tilt(b.clone(), &eta).as_ref(), body, sigma, opts.sublevel_grid)?;
            let mut base = Vec::new();
            if let Some(i) = i {
                base.push(i.clone());
            }
            base.push(m.function.oracle().clone());
            let s = lambda_sweep(&base, g.as_ref(), gamma, body, lambda_max, Some(sigma), &opts.solve)?;
            Ok(MemberSweep {
                index: m.index,
                sigma,
                sublevel,
                residuals: s.per_lambda.iter().map(|r| r.grad_residual).collect(),
                lambda0: s.per_lambda[0].clone(),
                path: s.per_lambda.iter().map(|r| r.x_star.as_slice().to_vec()).collect(),
                lambda_grid: s.lambda_grid,
                success: s.success,
                eps_hat: s.eps_hat,
                eps_hat_open: s.eps_hat_open,
                lambda0_ok: s.lambda0_ok,
                degenerate: s.degenerate,
            })
        })
        .collect();
    let sweeps = sweeps?;
    let mut report = TheoremReport::new("2.5", &sweep_inputs("2.5", phi, family, gamma, lambda_max, opts));
    report.eta = Some(eta.as_slice().to_vec());
    report.gamma = Some(gamma.as_slice().to_vec());
    report.margin_required = common.margin_required.clone();
    report.members = common.members.clone();
    for (m, s) in report.members.iter_mut().zip(&sweeps) {
        m.eps_hat = Some(s.eps_hat);
        m.eps_hat_open = Some(s.eps_hat_open);
        let swept = if s.degenerate { s.lambda0_ok } else { s.eps_hat > 0.0 };
        m.passed = m.passed && s.sublevel.holds && swept;
        if !s.sublevel.holds {
            m.notes.push(format!("sublevel set at σ = {} reaches the boundary", s.sigma));
        }
        if s.degenerate {
            m.notes.push("λ_max below the grid floor: only λ = 0 was solved".into());
        }
    }
    report.details = json!({ "common_gamma": common.details, "sweeps": sweeps });
    report.finish();
    Ok(report)
}

/// `H` on the interior, `â = inf H` on the boundary, `+∞` outside.
/// Gradients are meaningful only at interior points.
#[derive(Debug)]
pub struct ExtendedH {
    body: ConvexBody,
    h: Oracle,
    pub a_hat: f64,
}

impl SmoothFn for ExtendedH {
    fn dim(&self) -> usize {
        self.h.dim()
    }

    fn value(&self, x: &Point) -> f64 {
        match self.body.membership(x) {
            Membership::Interior { margin } if margin > TOL_GEOM => self.h.value(x),
            Membership::Outside => f64::INFINITY,
            _ => self.a_hat,
        }
    }

    fn gradient(&self, x: &Point) -> Point {
        self.h.gradient(x)
    }

    fn hessian(&self, x: &Point) -> Option<crate::DMatrix<f64>> {
        self.h.hessian(x)
    }
}

const RAY_DECADES: i32 = 10;
const RAY_SAMPLES: usize = 64;
const PROBE_GRID: usize = 101;

/// Extends `H` to the closed body by its estimated infimum. The infimum is
/// the minimum over an interior grid and rays `c + (1 − 10⁻ᵏ)(b − c)`
/// towards boundary samples `b`; a ray whose decrease per decade does not
/// shrink marks `H` as unbounded below.
pub fn extend_h(body: &ConvexBody, h: &Oracle) -> Result<ExtendedH, TheoremError> {
    if !body.is_bounded() || body.dim() > 3 {
        return Err(TheoremError::Unsupported("extension needs a bounded body with n ≤ 3".into()));
    }
    if h.dim() != body.dim() {
        return Err(TheoremError::Precondition("H and the body differ in dimension".into()));
    }
    let per_axis = if body.dim() == 3 { 41 } else { PROBE_GRID };
    let mut a_hat = f64::INFINITY;
    for x in body.interior_grid(per_axis).iter().chain(std::iter::once(body.chebyshev_center())) {
        let v = h.value(x);
        if v.is_nan() || v == f64::NEG_INFINITY {
            return Err(TheoremError::Precondition(format!("H is not finite at {:?}", x.as_slice())));
        }
        a_hat = a_hat.min(v);
    }
    let c = body.chebyshev_center();
    let atlas = sample_boundary(body, if body.dim() == 2 { RAY_SAMPLES } else { 8 })?;
    for s in &atlas.samples {
        let vals: Vec<f64> = (1..=RAY_DECADES).map(|k| h.value(&(c + (&s.x - c) * (1.0 - 10f64.powi(-k))))).collect();
        if vals.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(TheoremError::Precondition(format!("H is not finite towards {:?}", s.x.as_slice())));
        }
        let drops: Vec<f64> = vals.windows(2).map(|w| w[0] - w[1]).collect();
        let tail = &drops[drops.len() - 4..];
        if tail.iter().all(|&d| d > 0.0) && tail.windows(2).all(|w| w[1] >= 0.5 * w[0]) {
            return Err(TheoremError::Precondition(format!(
                "H appears unbounded below towards {:?} (drop per decade {:e})",
                s.x.as_slice(),
                tail[tail.len() - 1]
            )));
        }
        a_hat = vals.iter().copied().fold(a_hat, f64::min);
    }
    Ok(ExtendedH { body: body.clone(), h: h.clone(), a_hat })
}

/// The perturbed sweep with `G` the boundary extension of `H` and `I = 0`.
/// Members pass on a positive success run over the open grid `]0, λ_max]`.
pub fn verify_theorem_2_6(
    phi: &BoundaryTrace,
    family: &TraceFamily,
    h: &Oracle,
    gamma: &Covector,
    lambda_max: f64,
    opts: &TheoremOptions,
) -> Result<TheoremReport, TheoremError> {
    let body = &family.body;
    if !body.is_bounded() {
        return Err(TheoremError::Precondition("the body must be bounded".into()));
    }
    let ext = extend_h(body, h)?;
    let a_hat = ext.a_hat;
    let g: Oracle = Arc::new(ext);
    let mut report = verify_theorem_2_5(phi, None, family, &g, gamma, lambda_max, opts)?;
    let mut inputs = sweep_inputs("2.6", phi, family, gamma, lambda_max, opts);
    inputs["a_hat"] = json!(a_hat);
    report.theorem_id = "2.6".into();
    report.inputs_digest = super::digest(&inputs);
    let sweeps = report.details["sweeps"].as_array().cloned().unwrap_or_default();
    for (m, s) in report.members.iter_mut().zip(&sweeps) {
        let degenerate = s["degenerate"].as_bool().unwrap_or(false);
        let lambda0_ok = s["lambda0_ok"].as_bool().unwrap_or(false);
        let sublevel = s["sublevel"]["holds"].as_bool().unwrap_or(false);
        let open = m.eps_hat_open.unwrap_or(0.0);
        let common = m.margin.zip(m.interior_inf).is_some();
        m.passed = common && sublevel && if degenerate { lambda0_ok } else { open > 0.0 };
    }
    report.details["a_hat"] = json!(a_hat);
    report.finish();
    Ok(report)
}

/// Largest observed `‖∇P(x) − ∇P(y)‖/‖x − y‖` over seeded nearby pairs
/// in the ball of radius `radius` around the origin.
pub fn lipschitz_estimate(p: &dyn SmoothFn, radius: f64, samples: usize, seed: u64) -> f64 {
    let dim = p.dim();
    let mut rng = seeded(split(seed, 0x11b));
    let mut best: f64 = 0.0;
    for k in 0..samples {
        let u = unit_vector(&mut rng, dim);
        let r = radius * rand::Rng::random::<f64>(&mut rng).powf(1.0 / dim as f64);
        let x = u * r;
        // Alternate short and long pairs.
        let h = if k % 2 == 0 { 1e-3 * radius } else { radius };
        let y = &x + unit_vector(&mut rng, dim) * h;
        let d = (&x - &y).norm();
        best = best.max((p.gradient(&x) - p.gradient(&y)).norm() / d);
    }
    best
}

/// Inputs of the Lipschitz-perturbation pipeline on a centered ball.
pub struct Theorem27Input<'a> {
    pub phi: &'a BoundaryTrace,
    pub p: &'a Oracle,
    pub mu: f64,
    pub q: Option<&'a Oracle>,
    pub h: &'a Oracle,
    pub lambda_max: f64,
    /// Extra boundary-vanishing perturbations of `J`.
    pub perturbations: &'a [Oracle],
}

const LIPSCHITZ_SAMPLES: usize = 4000;
/// Radius factor of the region where `L̂` is sampled.
const LIPSCHITZ_DILATION: f64 = 2.0;
const MARGIN_TOL: f64 = 1e-6;

/// `J = (μ/2)‖·‖² + P + Q` on a ball centered at the origin. Requires
/// `μ > L̂`, checks the curvature margin of `J` and that `P + Q` carries the
/// trace `φ`, then runs the extension sweep with the tilt found by
/// [`search_eta`].
pub fn verify_theorem_2_7(input: &Theorem27Input<'_>, opts: &TheoremOptions) -> Result<TheoremReport, TheoremError> {
    let Theorem27Input { phi, p, mu, q, h, lambda_max, perturbations } = *input;
    let body = &phi.atlas.body;
    let Shape::Ball { center, radius } = body.shape() else {
        return Err(TheoremError::Precondition("the body must be a ball".into()));
    };
    if center.norm() > TOL_GEOM {
        return Err(TheoremError::Precondition("the ball must be centered at the origin".into()));
    }
    let dim = body.dim();
    if p.dim() != dim || q.is_some_and(|q| q.dim() != dim) {
        return Err(TheoremError::Precondition("P, Q and the body differ in dimension".into()));
    }
    let seed = opts.solve.seed;
    let l_hat = lipschitz_estimate(p.as_ref(), LIPSCHITZ_DILATION * radius, LIPSCHITZ_SAMPLES, seed);
    if mu <= l_hat {
        return Err(TheoremError::Precondition(format!("μ = {mu} does not exceed the Lipschitz estimate {l_hat}")));
    }
    let quad = FnSpec::Quadratic {
        q: (0..dim).map(|r| (0..dim).map(|c| if r == c { mu } else { 0.0 }).collect()).collect(),
        b: None,
    }
    .oracle()?;
    let mut pq_terms = vec![(1.0, p.clone())];
    if let Some(q) = q {
        pq_terms.push((1.0, q.clone()));
    }
    let pq = sum(dim, pq_terms);
    let j = sum(dim, vec![(1.0, quad), (1.0, pq.clone())]);
    let margin = strict_margin(j.as_ref(), body, 400, seed)?;
    if margin.margin < mu - l_hat - MARGIN_TOL {
        return Err(TheoremError::Precondition(format!(
            "sampled curvature {} is below μ − L̂ = {}",
            margin.margin,
            mu - l_hat
        )));
    }
    let shift = is_constant_shift(&boundary_trace(&pq, phi.atlas.clone()), phi, opts.shift_tol)?;
    if !shift.holds {
        return Err(TheoremError::TraceMismatch { member: 0, max_deviation: shift.max_deviation });
    }
    let eta = search_eta(phi, EtaStrategy::PairEqualize, opts)?;
    let base = SmoothConvexFn::new(j, None, ConvexMeta { margin: margin.margin, coercive: true });
    let family = make_family(body, &base, perturbations, 0.5 * margin.margin, seed)?;
    let mut report = verify_theorem_2_6(phi, &family, h, &eta.gamma(), lambda_max, opts)?;
    let mut inputs = sweep_inputs("2.7", phi, &family, &eta.gamma(), lambda_max, opts);
    inputs["mu"] = json!(mu);
    inputs["l_hat"] = json!(l_hat);
    report.theorem_id = "2.7".into();
    report.inputs_digest = super::digest(&inputs);
    report.details["lipschitz_estimate"] = json!(l_hat);
    report.details["strict_margin"] = json!(margin.margin);
    report.details["mu"] = json!(mu);
    report.details["eta_search"] = json!(eta);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::TraceSource;
    use crate::solvers::{algebraic_interior_test, solve_gradient_equation, SolveOptions};

    fn disk() -> ConvexBody {
        ConvexBody::unit_ball(2)
    }

    fn barrier(scale: f64) -> Oracle {
        FnSpec::RadialBarrier { center: vec![0.0, 0.0], radius: 1.0, scale }.oracle().unwrap()
    }

    fn cos_family() -> (BoundaryTrace, TraceFamily) {
        let atlas = Arc::new(sample_boundary(&disk(), 360).unwrap());
        let phi = BoundaryTrace::from_source(atlas, TraceSource::Trig { constant: 0.0, cos: vec![1.0], sin: vec![] })
            .unwrap();
        let base = FnSpec::LinearPlusQuadratic { a: vec![1.0, 0.0], c: 1.0 }.builtin().unwrap();
        let q = FnSpec::Affine { a: vec![0.5, -1.0], c: 0.1 }.oracle().unwrap();
        (phi, make_family(&disk(), &base, &[q], 0.5, 3).unwrap())
    }

    #[test]
    fn extension_values() {
        let g = extend_h(&disk(), &barrier(1.0)).unwrap();
        assert!(g.a_hat.abs() < 1e-15);
        assert_eq!(g.value(&Point::from_vec(vec![1.0, 0.0])), 0.0);
        assert!((g.value(&Point::from_vec(vec![0.5, 0.0])) + (0.75f64).ln()).abs() < 1e-12);
        assert_eq!(g.value(&Point::from_vec(vec![2.0, 0.0])), f64::INFINITY);
        let five = FnSpec::Constant { value: 5.0, dim: 2 }.oracle().unwrap();
        let g = extend_h(&disk(), &five).unwrap();
        assert_eq!(g.a_hat, 5.0);
        assert_eq!(g.value(&Point::from_vec(vec![0.0, 1.0])), 5.0);
        let log = FnSpec::LogRadial { center: vec![0.0, 0.0], radius: 1.0, scale: 1.0 }.oracle().unwrap();
        assert!(matches!(extend_h(&disk(), &log), Err(TheoremError::Precondition(_))));
    }

    #[test]
    fn sweep_with_a_barrier() {
        let (phi, family) = cos_family();
        let gamma = Covector::from_vec(vec![1.0, 0.0]);
        let r = verify_theorem_2_6(&phi, &family, &barrier(1.0), &gamma, 1.0, &TheoremOptions::default()).unwrap();
        assert!(r.verdict, "{:#?}", r.members);
        assert!(r.members.iter().all(|m| m.eps_hat_open.unwrap() > 0.0));
        let sweeps = r.details["sweeps"].as_array().unwrap();
        // The λ = 0 column is the plain gradient-equation solve.
        let plain = solve_gradient_equation(
            family.members[0].function.oracle().as_ref(),
            &gamma,
            &disk(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(sweeps[0]["lambda0"]["x_star"], json!(plain.x_star.as_slice()));
    }

    #[test]
    fn steep_barrier_still_has_positive_eps() {
        let (phi, family) = cos_family();
        let gamma = Covector::from_vec(vec![1.0, 0.0]);
        let r = verify_theorem_2_6(&phi, &family, &barrier(100.0), &gamma, 1.0, &TheoremOptions::default()).unwrap();
        assert!(r.members.iter().all(|m| m.eps_hat_open.unwrap() > 0.0));
    }

    #[test]
    fn linear_g_matches_the_interior_test() {
        let (phi, family) = cos_family();
        let gamma = Covector::from_vec(vec![1.0, 0.0]);
        let c = Covector::from_vec(vec![0.6, 0.8]);
        let g = FnSpec::Affine { a: c.as_slice().to_vec(), c: 0.0 }.oracle().unwrap();
        let opts = TheoremOptions::default();
        let r = verify_theorem_2_5(&phi, None, &family, &g, &gamma, 1.0, &opts).unwrap();
        let j = family.members[0].function.oracle();
        // ∇J + λc = γ̃ ⇔ ∇J = γ̃ + λ(−c).
        let t = algebraic_interior_test(
            j.as_ref(),
            &gamma,
            &disk(),
            &[-&c],
            &crate::tol::geometric_grid(1.0),
            0.0,
            &opts.solve,
        )
        .unwrap();
        let sweep_eps = r.members[0].eps_hat.unwrap();
        assert_eq!(sweep_eps, t.directions[0].delta_hat);
    }

    #[test]
    fn degenerate_lambda_range() {
        let (phi, family) = cos_family();
        let r = verify_theorem_2_5(
            &phi,
            None,
            &family,
            &barrier(1.0),
            &Covector::from_vec(vec![1.0, 0.0]),
            1e-5,
            &TheoremOptions::default(),
        )
        .unwrap();
        assert!(r.verdict);
        assert!(r.details["sweeps"][0]["degenerate"].as_bool().unwrap());
    }

    #[test]
    fn sine_perturbation() {
        let atlas = Arc::new(sample_boundary(&disk(), 360).unwrap());
        let p = FnSpec::Sine { dim: 2, coord: 0, amplitude: 1.0, frequency: 1.0, phase: 0.0 }.oracle().unwrap();
        let phi = BoundaryTrace::from_source(atlas, TraceSource::Oracle(p.clone())).unwrap();
        let l = lipschitz_estimate(p.as_ref(), 2.0, LIPSCHITZ_SAMPLES, 0);
        assert!((0.9..=1.1).contains(&l), "{l}");
        let input = Theorem27Input {
            phi: &phi,
            p: &p,
            mu: 2.0,
            q: None,
            h: &barrier(1.0),
            lambda_max: 1.0,
            perturbations: &[],
        };
        let r = verify_theorem_2_7(&input, &TheoremOptions::default()).unwrap();
        assert!(r.verdict, "{:#?}", r.members);
        assert!(r.details["strict_margin"].as_f64().unwrap() >= 0.8);
        let low = Theorem27Input { mu: l, ..input };
        assert!(matches!(verify_theorem_2_7(&low, &TheoremOptions::default()), Err(TheoremError::Precondition(_))));
    }
}
