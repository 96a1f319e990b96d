use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{margin_strict, MemberResult, TheoremError, TheoremOptions, TheoremReport};
use crate::functions::oracle::{sum, tilt};
use crate::functions::{boundary_trace, is_constant_shift, BoundaryTrace, Oracle, TraceFamily};
use crate::geometry::certify_nonconvex_boundary;
use crate::solvers::{algebraic_interior_test, minimize_over_body, minimize_over_boundary, SolveStatus};
use crate::Covector;

#[derive(Clone, Debug, Serialize)]
pub struct CommonGammaMember {
    pub index: usize,
    pub trace_shift: f64,
    pub interior_x: Vec<f64>,
    pub interior_inf: f64,
    pub interior_spread: f64,
    pub boundary_x: Vec<f64>,
    pub boundary_inf: f64,
    pub margin: f64,
    pub margin_required: f64,
    pub resolution_insufficient: bool,
}

/// `I + J_k` as one oracle.
pub(crate) fn with_i(i: Option<&Oracle>, j: &Oracle) -> Oracle {
    match i {
        Some(i) => sum(j.dim(), vec![(1.0, i.clone()), (1.0, j.clone())]),
        None => j.clone(),
    }
}

pub(crate) fn family_inputs(family: &TraceFamily) -> serde_json::Value {
    json!({
        "body": format!("{:?}", family.body.shape()),
        "alphas": family.members.iter().map(|m| m.alpha).collect::<Vec<_>>(),
        "base_margin": family.base_margin,
        "margin_min": family.margin_min,
    })
}

pub(crate) fn options_inputs(opts: &TheoremOptions) -> serde_json::Value {
    json!({
        "tol_solve": opts.solve.tol_solve,
        "iter_cap": opts.solve.iter_cap,
        "starts": opts.solve.starts,
        "seed": opts.solve.seed,
        "tol_multi": opts.tol_multi,
        "sep_min": opts.sep_min,
        "shift_tol": opts.shift_tol,
        "sublevel_grid": opts.sublevel_grid,
    })
}

/// Minimizes `I + J_k + ⟨η, ·⟩` over the body and over its boundary for
/// every member, with one `η` for the whole family.
pub fn verify_common_gamma(
    phi: &BoundaryTrace,
    eta: &Covector,
    family: &TraceFamily,
    i: Option<&Oracle>,
    opts: &TheoremOptions,
) -> Result<TheoremReport, TheoremError> {
    let atlas = &phi.atlas;
    let body = &family.body;
    if eta.len() != body.dim() || atlas.body.dim() != body.dim() || i.is_some_and(|f| f.dim() != body.dim()) {
        return Err(TheoremError::Precondition("η, φ, I and the family live in different dimensions".into()));
    }
    let lines: Result<Vec<CommonGammaMember>, TheoremError> = family
        .members
        .par_iter()
        .map(|m| {
            let shift = is_constant_shift(&boundary_trace(m.function.oracle(), atlas.clone()), phi, opts.shift_tol)?;
            if !shift.holds {
                return Err(TheoremError::TraceMismatch { member: m.index, max_deviation: shift.max_deviation });
            }
            let f = tilt(with_i(i, m.function.oracle()), eta);
            let interior = minimize_over_body(f.as_ref(), body, &opts.solve)?;
            if interior.status == SolveStatus::Degenerate {
                return Err(TheoremError::Degenerate { member: m.index, stage: "interior minimization".into() });
            }
            let boundary = minimize_over_boundary(f.as_ref(), atlas, &opts.solve)?;
            let b = &boundary.best;
            Ok(CommonGammaMember {
                index: m.index,
                trace_shift: shift.constant,
                interior_x: interior.x_star.as_slice().to_vec(),
                interior_inf: interior.value,
                interior_spread: interior.start_spread,
                boundary_x: b.x_star.as_slice().to_vec(),
                boundary_inf: b.value,
                margin: b.value - interior.value,
                margin_required: margin_strict(interior.value, b.value),
                resolution_insufficient: boundary.resolution_insufficient,
            })
        })
        .collect();
    let lines = lines?;
    let inputs = json!({
        "theorem": "common_gamma",
        "eta": eta.as_slice(),
        "phi": phi.values,
        "with_i": i.is_some(),
        "family": family_inputs(family),
        "options": options_inputs(opts),
    });
    let mut report = TheoremReport::new("common_gamma", &inputs);
    report.eta = Some(eta.as_slice().to_vec());
    report.gamma = Some((-eta).as_slice().to_vec());
    report.margin_required = lines.iter().map(|l| l.margin_required).collect();
    report.members = lines
        .iter()
        .zip(&family.members)
        .map(|(l, m)| {
            let mut notes = Vec::new();
            if l.resolution_insufficient {
                notes.push("boundary refinement moved far below the atlas minimum".into());
            }
            MemberResult {
                index: l.index,
                alpha: m.alpha,
                interior_inf: Some(l.interior_inf),
                boundary_inf: Some(l.boundary_inf),
                margin: Some(l.margin),
                passed: l.margin >= l.margin_required,
                notes,
                ..MemberResult::default()
            }
        })
        .collect();
    report.details = json!({ "members": lines });
    report.finish();
    Ok(report)
}

/// Model of the dense convex set `S` that must contain `γ̃`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SSpec {
    All,
    /// Points with coordinates in `(1/q)·Z`, refined by doubling `q`.
    RationalLattice {
        q: u64,
    },
    /// The open half-space `{γ : ⟨normal, γ⟩ < offset}`.
    HalfspaceDense {
        normal: Vec<f64>,
        offset: f64,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct SnapAttempt {
    pub denominator: Option<u64>,
    pub snapped: Vec<f64>,
    pub distance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SnapReport {
    pub spec: SSpec,
    pub original: Vec<f64>,
    /// The accepted point of `S`, if any.
    pub snapped: Option<Vec<f64>>,
    pub snap_distance: Option<f64>,
    pub attempts: Vec<SnapAttempt>,
    pub passed: bool,
}

/// Doublings of the lattice denominator tried after the first snap.
const SNAP_REFINEMENTS: u32 = 6;

/// Moves `γ̃` into `S` and re-checks it with `check`, shrinking the snap
/// radius until the check passes or the refinements run out.
pub fn verify_in_s(
    gamma: &Covector,
    s: &SSpec,
    check: &mut dyn FnMut(&Covector) -> Result<bool, TheoremError>,
) -> Result<SnapReport, TheoremError> {
    let mut attempts = Vec::new();
    let mut attempt =
        |g: Covector, denominator: Option<u64>, attempts: &mut Vec<SnapAttempt>| -> Result<bool, TheoremError> {
            let passed = check(&g)?;
            attempts.push(SnapAttempt {
                denominator,
                distance: (&g - gamma).norm(),
                snapped: g.as_slice().to_vec(),
                passed,
            });
            Ok(passed)
        };
    match s {
        SSpec::All => {
            attempt(gamma.clone(), None, &mut attempts)?;
        }
        SSpec::RationalLattice { q } => {
            if *q == 0 {
                return Err(TheoremError::Precondition("lattice denominator must be positive".into()));
            }
            for k in 0..=SNAP_REFINEMENTS {
                let d = q.saturating_mul(1 << k);
                let g = gamma.map(|v| (v * d as f64).round() / d as f64);
                let exact = g == *gamma;
                if attempt(g, Some(d), &mut attempts)? || exact {
                    break;
                }
            }
        }
        SSpec::HalfspaceDense { normal, offset } => {
            let a = Covector::from_column_slice(normal);
            if a.len() != gamma.len() || !(a.norm() > 0.0) {
                return Err(TheoremError::Precondition("half-space normal must be non-zero and match γ̃".into()));
            }
            let excess = a.dot(gamma) - offset;
            if excess < 0.0 {
                attempt(gamma.clone(), None, &mut attempts)?;
            } else {
                for k in 0..=SNAP_REFINEMENTS {
                    let inset = 1e-2 * 0.1f64.powi(k as i32);
                    let g = gamma - &a * ((excess + inset) / a.norm_squared());
                    if attempt(g, None, &mut attempts)? {
                        break;
                    }
                }
            }
        }
    }
    let accepted = attempts.iter().find(|a| a.passed);
    Ok(SnapReport {
        spec: s.clone(),
        original: gamma.as_slice().to_vec(),
        snapped: accepted.map(|a| a.snapped.clone()),
        snap_distance: accepted.map(|a| a.distance),
        passed: accepted.is_some(),
        attempts,
    })
}

pub struct Theorem11Input<'a> {
    pub phi: &'a BoundaryTrace,
    pub family: &'a TraceFamily,
    pub eta: &'a Covector,
    pub directions: &'a [Covector],
    pub delta_grid: &'a [f64],
    pub delta_min: f64,
    pub s: &'a SSpec,
}

/// Common-`γ̃` check, then the algebraic-interior test of `γ̃ = −η̃` for
/// every member, then membership of `γ̃` in `S` with the same checks
/// repeated at the snapped point.
pub fn verify_theorem_1_1(input: &Theorem11Input<'_>, opts: &TheoremOptions) -> Result<TheoremReport, TheoremError> {
    let Theorem11Input { phi, family, eta, directions, delta_grid, delta_min, s } = *input;
    if !certify_nonconvex_boundary(&phi.atlas)?.is_non_convex() {
        return Err(TheoremError::ConvexBoundary);
    }
    let common = verify_common_gamma(phi, eta, family, None, opts)?;
    let inputs = json!({
        "theorem": "1.1",
        "common": common.inputs_digest,
        "directions": directions.iter().map(|d| d.as_slice().to_vec()).collect::<Vec<_>>(),
        "delta_grid": delta_grid,
        "delta_min": delta_min,
        "s": s,
    });
    let mut report = TheoremReport::new("1.1", &inputs);
    report.eta = common.eta.clone();
    report.gamma = common.gamma.clone();
    report.margin_required = common.margin_required.clone();
    if !common.verdict {
        report.members = common.members.clone();
        report.members.iter_mut().for_each(|m| m.passed = false);
        report.notes.push("the common-γ̃ check failed; interior tests skipped".into());
        report.details = json!({ "common_gamma": common.details });
        report.finish();
        return Ok(report);
    }
    let interior = |gamma: &Covector| -> Result<Vec<crate::solvers::InteriorTestReport>, TheoremError> {
        family
            .members
            .iter()
            .map(|m| {
                let r = algebraic_interior_test(
                    m.function.oracle().as_ref(),
                    gamma,
                    &family.body,
                    directions,
                    delta_grid,
                    delta_min,
                    &opts.solve,
                )?;
                Ok(r)
            })
            .collect()
    };
    let gamma = -eta;
    let tests = interior(&gamma)?;
    let mut members = common.members.clone();
    for (m, t) in members.iter_mut().zip(&tests) {
        m.delta_hats = t.directions.iter().map(|d| d.delta_hat).collect();
        m.passed = m.passed && t.passed;
        for d in t.directions.iter().filter(|d| d.delta_hat < delta_min) {
            if let Some((lambda, why)) = &d.failure {
                m.notes.push(format!("direction {:?} fails at λ = {lambda:e}: {why}", d.direction.as_slice()));
            }
        }
    }
    let snap = verify_in_s(&gamma, s, &mut |g: &Covector| {
        if g == &gamma {
            return Ok(members.iter().all(|m| m.passed));
        }
        let c = verify_common_gamma(phi, &-g, family, None, opts)?;
        Ok(c.verdict && interior(g)?.iter().all(|t| t.passed))
    })?;
    if !snap.passed {
        report.notes.push("no snapped γ̃ in S kept every check passing".into());
    }
    report.members = members;
    report.details = json!({
        "common_gamma": common.details,
        "interior_tests": tests
            .iter()
            .map(|t| json!({ "base": t.base, "directions": t.directions, "passed": t.passed }))
            .collect::<Vec<_>>(),
        "snap": snap,
    });
    report.finish();
    report.set_verdict(report.verdict && snap.passed);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::functions::{make_family, FnSpec, TraceSource};
    use crate::geometry::{sample_boundary, ConvexBody};
    use crate::solvers::default_directions;
    use crate::tol::geometric_grid;

    fn disk_setup(n_perturb: usize) -> (BoundaryTrace, TraceFamily) {
        let disk = ConvexBody::unit_ball(2);
        let atlas = Arc::new(sample_boundary(&disk, 360).unwrap());
        let phi = BoundaryTrace::from_source(atlas, TraceSource::Trig { constant: 0.0, cos: vec![1.0], sin: vec![] })
            .unwrap();
        // x₁ + ‖x‖² − 1 restricts to cos θ on the circle.
        let base = FnSpec::LinearPlusQuadratic { a: vec![1.0, 0.0], c: 1.0 }.builtin().unwrap();
        let base = base.plus(&FnSpec::Constant { value: -1.0, dim: 2 }.oracle().unwrap());
        let qs: Vec<Oracle> =
            (0..n_perturb).map(|k| FnSpec::Affine { a: vec![1.0, k as f64 * 0.5], c: 0.2 }.oracle().unwrap()).collect();
        let family = make_family(&disk, &base, &qs, 0.5, 7).unwrap();
        (phi, family)
    }

    #[test]
    fn disk_family_shares_gamma() {
        let (phi, family) = disk_setup(2);
        let eta = Covector::from_vec(vec![-1.0, 0.0]);
        let r = verify_common_gamma(&phi, &eta, &family, None, &TheoremOptions::default()).unwrap();
        assert!(r.verdict, "{:#?}", r.members);
        let base = &r.members[0];
        assert!((base.interior_inf.unwrap() + 1.0).abs() < 1e-10);
        assert!(base.boundary_inf.unwrap().abs() < 1e-10);
        assert!((base.margin.unwrap() - 1.0).abs() < 1e-9);
        // Perturbations vanish on the circle: same boundary values.
        for m in &r.members[1..] {
            assert!(m.boundary_inf.unwrap().abs() < 1e-9);
            assert!(m.interior_inf.unwrap() < m.boundary_inf.unwrap());
        }
        assert_eq!(r.schema, 1);
        assert_eq!(r.inputs_digest.len(), 64);
    }

    #[test]
    fn wrong_sign_fails() {
        let (phi, family) = disk_setup(1);
        let eta = Covector::from_vec(vec![1.0, 0.0]);
        let r = verify_common_gamma(&phi, &eta, &family, None, &TheoremOptions::default()).unwrap();
        assert!(!r.verdict);
    }

    #[test]
    fn foreign_traces_are_rejected() {
        let (phi, _) = disk_setup(0);
        let other = FnSpec::LinearPlusQuadratic { a: vec![0.0, 1.0], c: 1.0 }.builtin().unwrap();
        let family = make_family(&ConvexBody::unit_ball(2), &other, &[], 0.5, 1).unwrap();
        let err =
            verify_common_gamma(&phi, &Covector::from_vec(vec![-1.0, 0.0]), &family, None, &TheoremOptions::default());
        assert!(matches!(err, Err(TheoremError::TraceMismatch { member: 0, .. })));
    }

    #[test]
    fn snapping() {
        let g = Covector::from_vec(vec![0.123456, -0.987654]);
        let all = verify_in_s(&g, &SSpec::All, &mut |_| Ok(true)).unwrap();
        assert!(all.passed && all.snap_distance == Some(0.0));
        let r = verify_in_s(&g, &SSpec::RationalLattice { q: 10 }, &mut |s| Ok((s - &g).norm() < 0.05)).unwrap();
        assert!(r.passed);
        assert!(r.snap_distance.unwrap() <= 2f64.sqrt() / 20.0);
        assert_eq!(r.snapped.as_deref(), Some(&[0.1, -1.0][..]));
        let tiny = verify_in_s(&g, &SSpec::RationalLattice { q: 1 }, &mut |s| Ok((s - &g).norm() < 1e-12)).unwrap();
        assert!(!tiny.passed);
        assert_eq!(tiny.attempts.len(), 7);
        let h = SSpec::HalfspaceDense { normal: vec![1.0, 0.0], offset: 0.0 };
        let r = verify_in_s(&g, &h, &mut |s| Ok(s[0] < 0.0)).unwrap();
        assert!(r.passed && r.snapped.unwrap()[0] < 0.0);
    }

    #[test]
    fn theorem_1_1_on_the_disk() {
        let (phi, family) = disk_setup(1);
        let eta = Covector::from_vec(vec![-1.0, 0.0]);
        let dirs = default_directions(2, 4, 3);
        let grid = geometric_grid(0.5);
        let input = Theorem11Input {
            phi: &phi,
            family: &family,
            eta: &eta,
            directions: &dirs,
            delta_grid: &grid,
            delta_min: 1e-3,
            s: &SSpec::RationalLattice { q: 100 },
        };
        let r = verify_theorem_1_1(&input, &TheoremOptions::default()).unwrap();
        assert!(r.verdict, "{:#?}", r.members);
        // ∇J = e₁ + 2x, so γ̃ + λy with λ ≤ 0.5 stays in the gradient range.
        assert!(r.members[0].delta_hats.iter().all(|&d| d == 0.5));
    }

    #[test]
    fn half_line_is_refused() {
        let hl = ConvexBody::half_line(0.0, 1.0).unwrap();
        let atlas = Arc::new(sample_boundary(&hl, 4).unwrap());
        let phi = BoundaryTrace::from_values(atlas, vec![0.0]).unwrap();
        let (_, family) = disk_setup(0);
        let eta = Covector::from_vec(vec![0.0]);
        let input = Theorem11Input {
            phi: &phi,
            family: &family,
            eta: &eta,
            directions: &[],
            delta_grid: &[],
            delta_min: 1e-3,
            s: &SSpec::All,
        };
        assert!(matches!(verify_theorem_1_1(&input, &TheoremOptions::default()), Err(TheoremError::ConvexBoundary)));
    }
}
