use std::sync::Arc;

use rand::SeedableRng;

use super::diagnostics::{hessian_or_fd, probe_points};
use super::oracle::{Product, Sum};
use super::{strict_margin, ConvexMeta, FunctionError, Oracle, SmoothConvexFn};
use crate::geometry::{boundary_vanishing_factor, spectral_norm, ConvexBody, VanishingFactor};

/// Smallest admissible perturbation scale.
const ALPHA_FLOOR: f64 = 1e-12;
const MARGIN_SAMPLES: usize = 400;

#[derive(Clone, Debug)]
pub struct FamilyMember {
    /// `0` is the base function.
    pub index: usize,
    pub alpha: f64,
    /// Estimated Hessian-norm bound of `w·q` (`0` for the base).
    pub hessian_bound: f64,
    pub function: SmoothConvexFn,
}

/// `J_k = J₀ + α_k·w·q_k`, all sharing the boundary trace of `J₀`.
#[derive(Clone, Debug)]
pub struct TraceFamily {
    pub body: ConvexBody,
    pub base_margin: f64,
    pub margin_min: f64,
    pub vanishing: Arc<VanishingFactor>,
    pub members: Vec<FamilyMember>,
}

impl TraceFamily {
    pub fn base(&self) -> &SmoothConvexFn {
        &self.members[0].function
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

pub fn make_family(
    body: &ConvexBody,
    base: &SmoothConvexFn,
    qs: &[Oracle],
    margin_min: f64,
    seed: u64,
) -> Result<TraceFamily, FunctionError> {
    if body.is_half_line() {
        return Err(FunctionError::InvalidParams("families are not generated on a half-line".into()));
    }
    if !(margin_min > 0.0) {
        return Err(FunctionError::InvalidParams(format!("margin_min = {margin_min} must be positive")));
    }
    let dim = body.dim();
    if base.dim() != dim || qs.iter().any(|q| q.dim() != dim) {
        return Err(FunctionError::InvalidParams("function dimension differs from the body".into()));
    }
    let m_hat = strict_margin(base.oracle().as_ref(), body, MARGIN_SAMPLES, seed)?;
    if m_hat.not_strict || m_hat.margin <= margin_min {
        return Err(FunctionError::NotStrictlyConvex(format!(
            "sampled margin {} does not exceed margin_min {margin_min}",
            m_hat.margin
        )));
    }
    let w = Arc::new(boundary_vanishing_factor(body)?);
    let scan = scan_points(body, seed);
    let mut members = vec![FamilyMember { index: 0, alpha: 0.0, hessian_bound: 0.0, function: base.clone() }];
    for (k, q) in qs.iter().enumerate() {
        let wq: Oracle = Arc::new(Product::new(w.clone(), q.clone()));
        let bound = scan.iter().map(|x| spectral_norm(&hessian_or_fd(wq.as_ref(), x))).fold(0.0, f64::max);
        if !bound.is_finite() {
            return Err(FunctionError::PerturbationRejected { index: k + 1, reason: "unbounded Hessian".into() });
        }
        let alpha = if bound > 0.0 { 0.5 * (m_hat.margin - margin_min) / bound } else { 1.0 };
        if alpha < ALPHA_FLOOR {
            return Err(FunctionError::PerturbationRejected {
                index: k + 1,
                reason: format!("scale {alpha:e} underflows"),
            });
        }
        let oracle: Oracle = Arc::new(Sum::new(dim, vec![(1.0, base.oracle().clone()), (alpha, wq)]));
        let meta = ConvexMeta { margin: (base.meta().margin - alpha * bound).max(0.0), coercive: base.meta().coercive };
        members.push(FamilyMember {
            index: k + 1,
            alpha,
            hessian_bound: bound,
            function: SmoothConvexFn::new(oracle, base.domain().cloned(), meta),
        });
    }
    check_distinct(body, &members, seed)?;
    Ok(TraceFamily { body: body.clone(), base_margin: m_hat.margin, margin_min, vanishing: w, members })
}

/// Interior grid plus seeded samples, and the body's vertices for polytopes.
fn scan_points(body: &ConvexBody, seed: u64) -> Vec<crate::Point> {
    let mut pts = probe_points(body, 200, crate::rng::split(seed, 1));
    if body.dim() <= 2 {
        pts.extend(body.interior_grid(41));
    }
    if let crate::geometry::Shape::Polytope(p) = body.shape() {
        pts.extend(p.vertices.iter().cloned());
    }
    pts
}

fn check_distinct(body: &ConvexBody, members: &[FamilyMember], seed: u64) -> Result<(), FunctionError> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(crate::rng::split(seed, 2));
    let probes: Vec<_> = (0..8).map(|_| body.sample_interior(&mut rng)).collect();
    let values: Vec<Vec<f64>> = members.iter().map(|m| probes.iter().map(|x| m.function.value(x)).collect()).collect();
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            let same =
                values[i].iter().zip(&values[j]).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs())));
            if same {
                return Err(FunctionError::DuplicateMembers(i, j));
            }
        }
    }
    Ok(())
}
