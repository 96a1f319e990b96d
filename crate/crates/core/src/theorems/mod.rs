//! Verification pipelines: the search for a tilt `η̃` that makes the
//! boundary functional multi-minimal, the common-`γ̃` check over a family
//! sharing one boundary trace, algebraic-interior and perturbed-equation
//! checks, and the half-line counterexample.

mod halfline;
mod perturbed;
mod search;
mod verify;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use halfline::{halfline_counterexample, HalflineCase};
pub use perturbed::{
    extend_h, lipschitz_estimate, verify_theorem_2_5, verify_theorem_2_6, verify_theorem_2_7, ExtendedH, MemberSweep,
    Theorem27Input,
};
pub use search::{search_eta, BoundaryMinimum, EtaCandidate, EtaStrategy};
pub use verify::{
    verify_common_gamma, verify_in_s, verify_theorem_1_1, CommonGammaMember, SSpec, SnapAttempt, SnapReport,
    Theorem11Input,
};

use crate::functions::FunctionError;
use crate::geometry::GeometryError;
use crate::minimax::MinimaxError;
use crate::solvers::{SolveError, SolveOptions};
use crate::tol;

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum TheoremError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Function(#[from] FunctionError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Minimax(#[from] MinimaxError),
    #[error("member {member}: boundary trace differs from φ by a non-constant (max deviation {max_deviation:e})")]
    TraceMismatch { member: usize, max_deviation: f64 },
    #[error("member {member}: {stage} is degenerate (starts disagree)")]
    Degenerate { member: usize, stage: String },
    #[error("convex boundary: the conclusion fails, as the half-line counterexample shows")]
    ConvexBoundary,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("σ unavailable: the common-γ̃ check failed")]
    SigmaUnavailable,
    #[error("no multi-minimal tilt at this resolution (best second gap {:e})", .0.quality.unwrap_or(f64::INFINITY))]
    NotFound(Box<EtaCandidate>),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl TheoremError {
    /// Failures that only reflect finite search resolution.
    pub fn is_resolution_limited(&self) -> bool {
        matches!(self, TheoremError::NotFound(_) | TheoremError::Minimax(MinimaxError::NotFoundAtResolution(_)))
    }
}

#[derive(Clone, Debug)]
pub struct TheoremOptions {
    pub solve: SolveOptions,
    /// Boundary values within this of the minimum count as minimal.
    pub tol_multi: f64,
    /// Minimal distance between distinct boundary minima.
    pub sep_min: f64,
    /// Tolerance of the constant-shift trace check.
    pub shift_tol: f64,
    /// Points per axis of the sublevel check grid.
    pub sublevel_grid: usize,
    /// Half-width of the η box scanned by the minimax strategy.
    pub eta_radius: f64,
    /// Points per axis of that box.
    pub eta_resolution: usize,
}

impl Default for TheoremOptions {
    fn default() -> Self {
        Self {
            solve: SolveOptions::default(),
            tol_multi: tol::TOL_MULTI,
            sep_min: 0.1,
            shift_tol: 1e-8,
            sublevel_grid: 201,
            eta_radius: 3.0,
            eta_resolution: 121,
        }
    }
}

/// Per-member line of a report. Fields that a pipeline does not compute
/// stay `None` or empty.
#[derive(Clone, Debug, Default, Serialize)]
pub struct MemberResult {
    pub index: usize,
    pub alpha: f64,
    pub interior_inf: Option<f64>,
    pub boundary_inf: Option<f64>,
    pub margin: Option<f64>,
    pub eps_hat: Option<f64>,
    pub eps_hat_open: Option<f64>,
    pub delta_hats: Vec<f64>,
    pub passed: bool,
    pub notes: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportStatus {
    Passed,
    Failed,
    /// A search found nothing at the configured resolution; not a refutation.
    NotFoundAtResolution,
}

#[derive(Clone, Debug, Serialize)]
pub struct TheoremReport {
    pub schema: u32,
    pub theorem_id: String,
    pub inputs_digest: String,
    pub eta: Option<Vec<f64>>,
    pub gamma: Option<Vec<f64>>,
    pub members: Vec<MemberResult>,
    /// Smallest boundary-minus-interior gap over the members.
    pub min_margin: Option<f64>,
    /// Required gap per member, aligned with `members`.
    pub margin_required: Vec<f64>,
    pub verdict: bool,
    pub status: ReportStatus,
    pub notes: Vec<String>,
    /// Stage-specific data.
    pub details: serde_json::Value,
}

impl TheoremReport {
    pub(crate) fn new(theorem_id: &str, inputs: &serde_json::Value) -> Self {
        Self {
            schema: REPORT_SCHEMA,
            theorem_id: theorem_id.into(),
            inputs_digest: digest(inputs),
            eta: None,
            gamma: None,
            members: Vec::new(),
            min_margin: None,
            margin_required: Vec::new(),
            verdict: false,
            status: ReportStatus::Failed,
            notes: Vec::new(),
            details: serde_json::Value::Null,
        }
    }

    /// Recomputes `verdict` and `min_margin` from the member lines.
    pub(crate) fn finish(&mut self) {
        self.verdict = !self.members.is_empty() && self.members.iter().all(|m| m.passed);
        self.min_margin = self.members.iter().filter_map(|m| m.margin).reduce(f64::min);
        self.set_verdict(self.verdict);
    }

    pub(crate) fn set_verdict(&mut self, verdict: bool) {
        self.verdict = verdict;
        self.status = if verdict { ReportStatus::Passed } else { ReportStatus::Failed };
    }
}

/// Hex SHA-256 of the compact JSON encoding.
pub fn digest(inputs: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(inputs).expect("JSON values serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `MARGIN_STRICT_REL` times the value scale of the two infima.
pub(crate) fn margin_strict(interior: f64, boundary: f64) -> f64 {
    tol::MARGIN_STRICT_REL * 1f64.max(interior.abs()).max(boundary.abs())
}
