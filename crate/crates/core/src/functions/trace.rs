use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{FnSpec, FunctionError, Oracle};
use crate::geometry::{BoundaryAtlas, Chart};

/// Config-level description of a boundary function `φ: ∂C → R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceSpec {
    /// `constant + Σₖ cos[k−1]·cos kθ + sin[k−1]·sin kθ` on a circle chart.
    Trig {
        #[serde(default)]
        constant: f64,
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
    /// Values at the polygon vertices, linear along edges.
    PiecewiseLinear { values: Vec<f64> },
    /// Restriction of a function to the boundary.
    Function { function: FnSpec },
}

impl TraceSpec {
    pub fn source(&self) -> Result<TraceSource, FunctionError> {
        Ok(match self {
            TraceSpec::Trig { constant, cos, sin } => {
                TraceSource::Trig { constant: *constant, cos: cos.clone(), sin: sin.clone() }
            }
            TraceSpec::PiecewiseLinear { values } => TraceSource::PiecewiseLinear(values.clone()),
            TraceSpec::Function { function } => TraceSource::Oracle(function.oracle()?),
        })
    }
}

/// Evaluator of `φ` at any chart parameter, used for refinement between
/// atlas samples.
#[derive(Clone, Debug)]
pub enum TraceSource {
    Trig { constant: f64, cos: Vec<f64>, sin: Vec<f64> },
    PiecewiseLinear(Vec<f64>),
    Oracle(Oracle),
}

impl TraceSource {
    fn check(&self, atlas: &BoundaryAtlas) -> Result<(), FunctionError> {
        match (self, atlas.charts.as_slice()) {
            (TraceSource::Trig { .. }, [Chart::Circle { .. }]) => Ok(()),
            (TraceSource::Trig { .. }, _) => {
                Err(FunctionError::InvalidParams("trig traces need a circle boundary".into()))
            }
            (TraceSource::PiecewiseLinear(v), [Chart::Polygon { vertices, .. }]) if v.len() == vertices.len() => Ok(()),
            (TraceSource::PiecewiseLinear(_), _) => {
                Err(FunctionError::InvalidParams("piecewise-linear traces need one value per polygon vertex".into()))
            }
            (TraceSource::Oracle(f), _) if f.dim() == atlas.body.dim() => Ok(()),
            (TraceSource::Oracle(_), _) => {
                Err(FunctionError::InvalidParams("trace function dimension differs from the body".into()))
            }
        }
    }

    fn eval(&self, chart: &Chart, theta: f64, phi: f64) -> f64 {
        match self {
            TraceSource::Trig { constant, cos, sin } => {
                let mut v = *constant;
                for (k, a) in cos.iter().enumerate() {
                    v += a * ((k + 1) as f64 * theta).cos();
                }
                for (k, b) in sin.iter().enumerate() {
                    v += b * ((k + 1) as f64 * theta).sin();
                }
                v
            }
            TraceSource::PiecewiseLinear(values) => {
                let Chart::Polygon { cumulative, perimeter, .. } = chart else {
                    unreachable!("checked at construction")
                };
                let s = theta.rem_euclid(*perimeter);
                let n = values.len();
                let i = cumulative.partition_point(|&c| c <= s).saturating_sub(1).min(n - 1);
                let len = cumulative[i + 1] - cumulative[i];
                let t = if len > 0.0 { (s - cumulative[i]) / len } else { 0.0 };
                values[i] * (1.0 - t) + values[(i + 1) % n] * t
            }
            TraceSource::Oracle(f) => f.value(&chart.point(theta, phi)),
        }
    }
}

/// Sampled boundary values `φ(x(θᵢ))`, aligned with the atlas samples.
#[derive(Clone, Debug)]
pub struct BoundaryTrace {
    pub atlas: Arc<BoundaryAtlas>,
    pub values: Vec<f64>,
    source: Option<TraceSource>,
}

impl BoundaryTrace {
    pub fn from_source(atlas: Arc<BoundaryAtlas>, source: TraceSource) -> Result<Self, FunctionError> {
        source.check(&atlas)?;
        let values = atlas.samples.iter().map(|s| source.eval(&atlas.charts[s.chart], s.theta, s.phi)).collect();
        Ok(Self { atlas, values, source: Some(source) })
    }

    /// A trace known only at the atlas samples.
    pub fn from_values(atlas: Arc<BoundaryAtlas>, values: Vec<f64>) -> Result<Self, FunctionError> {
        if values.len() != atlas.len() || values.iter().any(|v| !v.is_finite()) {
            return Err(FunctionError::InvalidParams("trace values must be finite and match the atlas".into()));
        }
        Ok(Self { atlas, values, source: None })
    }

    /// `φ` at an arbitrary chart parameter, when the trace has a source.
    pub fn eval(&self, chart: usize, theta: f64, phi: f64) -> Option<f64> {
        self.source.as_ref().map(|s| s.eval(&self.atlas.charts[chart], theta, phi))
    }

    pub fn has_source(&self) -> bool {
        self.source.is_some()
    }

    /// `φ + c`.
    pub fn shifted(&self, c: f64) -> BoundaryTrace {
        let source = self.source.clone().map(|s| match s {
            TraceSource::Trig { constant, cos, sin } => TraceSource::Trig { constant: constant + c, cos, sin },
            TraceSource::PiecewiseLinear(v) => TraceSource::PiecewiseLinear(v.into_iter().map(|x| x + c).collect()),
            TraceSource::Oracle(f) => {
                let dim = f.dim();
                let shift: Oracle = Arc::new(super::oracle::Affine { a: crate::Covector::zeros(dim), c });
                TraceSource::Oracle(super::oracle::sum(dim, vec![(1.0, f), (1.0, shift)]))
            }
        });
        BoundaryTrace { atlas: self.atlas.clone(), values: self.values.iter().map(|v| v + c).collect(), source }
    }
}

/// Restriction of `f` to the atlas samples.
pub fn boundary_trace(f: &Oracle, atlas: Arc<BoundaryAtlas>) -> BoundaryTrace {
    let values = atlas.samples.iter().map(|s| f.value(&s.x)).collect();
    BoundaryTrace { atlas, values, source: Some(TraceSource::Oracle(f.clone())) }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ShiftVerdict {
    pub holds: bool,
    /// Median of `t1 − t2`.
    pub constant: f64,
    pub max_deviation: f64,
}

/// Whether `t1 − t2` is constant on the atlas up to `tol`.
pub fn is_constant_shift(t1: &BoundaryTrace, t2: &BoundaryTrace, tol: f64) -> Result<ShiftVerdict, FunctionError> {
    if !(Arc::ptr_eq(&t1.atlas, &t2.atlas) || t1.atlas.same_samples(&t2.atlas)) {
        return Err(FunctionError::AtlasMismatch);
    }
    let diffs: Vec<f64> = t1.values.iter().zip(&t2.values).map(|(a, b)| a - b).collect();
    let max_deviation_of = |c: f64, d: &[f64]| d.iter().map(|v| (v - c).abs()).fold(0.0, f64::max);
    let mut sorted = diffs.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let constant = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
    let max_deviation = max_deviation_of(constant, &diffs);
    Ok(ShiftVerdict { holds: max_deviation <= tol, constant, max_deviation })
}
