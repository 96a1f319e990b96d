//! Named function families, as they appear in experiment configs.

use std::sync::Arc;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use super::oracle::{Affine, Oracle, SmoothFn, Sum};
use super::{ConvexMeta, FunctionError, SmoothConvexFn};
use crate::geometry::ConvexBody;
use crate::{Covector, Point};

/// Quadratic regularizer weight carried by every `log_sum_exp`.
pub const LOG_SUM_EXP_EPSILON: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinePiece {
    pub a: Vec<f64>,
    #[serde(default)]
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub powers: Vec<u32>,
}

fn one() -> f64 {
    1.0
}

/// Tagged description of a function; `type` selects the family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FnSpec {
    /// `½ xᵀQx + ⟨b, x⟩` with `Q ≻ 0`.
    Quadratic {
        q: Vec<Vec<f64>>,
        #[serde(default)]
        b: Option<Vec<f64>>,
    },
    /// `β⁻¹ log Σ exp(β(⟨aᵢ, x⟩ + cᵢ)) + ε‖x‖²`.
    LogSumExp {
        pieces: Vec<AffinePiece>,
        beta: f64,
    },
    /// `μ Σ (e^{xᵢ} − 1)`.
    ExpSum {
        mu: f64,
        dim: usize,
    },
    /// `‖x‖^p`, `p ≥ 2`.
    NormPower {
        p: f64,
        dim: usize,
    },
    /// `⟨a, x⟩ + c‖x‖²`.
    LinearPlusQuadratic {
        a: Vec<f64>,
        c: f64,
    },
    /// `μ(eˣ − 1)` on the half-line `[0, ∞)`.
    ExpHalfline {
        mu: f64,
    },
    /// Harmonic extension of the trigonometric polynomial
    /// `constant + Σₖ cos[k−1]·cos kθ + sin[k−1]·sin kθ` from the circle
    /// `|x − center| = radius`, plus `c‖x − center‖²`. Strictly convex on
    /// the disk when `c` dominates the harmonic part's curvature.
    TrigLift {
        #[serde(default)]
        center: Option<Vec<f64>>,
        #[serde(default = "one")]
        radius: f64,
        #[serde(default)]
        constant: f64,
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
        c: f64,
    },
    Affine {
        a: Vec<f64>,
        #[serde(default)]
        c: f64,
    },
    Constant {
        value: f64,
        dim: usize,
    },
    Polynomial {
        dim: usize,
        terms: Vec<Monomial>,
    },
    /// `amplitude · sin(frequency · x[coord] + phase)`.
    Sine {
        dim: usize,
        coord: usize,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `−scale · log(1 − ‖x − center‖²/radius²)`, `+∞` outside the ball.
    RadialBarrier {
        center: Vec<f64>,
        #[serde(default = "one")]
        radius: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `scale · log(1 − ‖x − center‖²/radius²)`; unbounded below.
    LogRadial {
        center: Vec<f64>,
        #[serde(default = "one")]
        radius: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    Sum {
        terms: Vec<FnSpec>,
    },
    Scaled {
        factor: f64,
        inner: Box<FnSpec>,
    },
}

impl FnSpec {
    /// Builds the evaluation oracle of any family.
    pub fn oracle(&self) -> Result<Oracle, FunctionError> {
        Ok(match self {
            FnSpec::Quadratic { q, b } => {
                let (q, b) = quadratic_parts(q, b.as_deref())?;
                Arc::new(QuadraticFn { q, b })
            }
            FnSpec::LogSumExp { pieces, beta } => {
                let dim = pieces
                    .first()
                    .map(|p| p.a.len())
                    .ok_or_else(|| FunctionError::InvalidParams("log_sum_exp needs at least one piece".into()))?;
                if pieces.iter().any(|p| p.a.len() != dim) || !(*beta > 0.0) {
                    return Err(FunctionError::InvalidParams(
                        "log_sum_exp pieces must share a dimension and β > 0".into(),
                    ));
                }
                let a = DMatrix::from_fn(pieces.len(), dim, |i, j| pieces[i].a[j]);
                let c = Point::from_iterator(pieces.len(), pieces.iter().map(|p| p.c));
                Arc::new(LogSumExpFn { a, c, beta: *beta, eps: LOG_SUM_EXP_EPSILON })
            }
            FnSpec::ExpSum { mu, dim } => {
                positive("mu", *mu)?;
                nonzero_dim(*dim)?;
                Arc::new(ExpSumFn { mu: *mu, dim: *dim })
            }
            FnSpec::ExpHalfline { mu } => {
                positive("mu", *mu)?;
                Arc::new(ExpSumFn { mu: *mu, dim: 1 })
            }
            FnSpec::NormPower { p, dim } => {
                if !(*p >= 2.0) {
                    return Err(FunctionError::InvalidParams(format!("norm_power needs p ≥ 2, got {p}")));
                }
                nonzero_dim(*dim)?;
                Arc::new(NormPowerFn { p: *p, dim: *dim })
            }
            FnSpec::LinearPlusQuadratic { a, c } => {
                positive("c", *c)?;
                nonzero_dim(a.len())?;
                let n = a.len();
                Arc::new(QuadraticFn { q: DMatrix::identity(n, n) * (2.0 * c), b: Point::from_column_slice(a) })
            }
            FnSpec::TrigLift { center, radius, constant, cos, sin, c } => {
                positive("radius", *radius)?;
                let center = center.clone().unwrap_or_else(|| vec![0.0, 0.0]);
                if center.len() != 2 {
                    return Err(FunctionError::InvalidParams("trig_lift lives in R²".into()));
                }
                Arc::new(TrigLiftFn {
                    center: Point::from_vec(center),
                    radius: *radius,
                    constant: *constant,
                    cos: cos.clone(),
                    sin: sin.clone(),
                    c: *c,
                })
            }
            FnSpec::Affine { a, c } => {
                nonzero_dim(a.len())?;
                Arc::new(Affine { a: Covector::from_column_slice(a), c: *c })
            }
            FnSpec::Constant { value, dim } => {
                nonzero_dim(*dim)?;
                Arc::new(Affine { a: Covector::zeros(*dim), c: *value })
            }
            FnSpec::Polynomial { dim, terms } => {
                nonzero_dim(*dim)?;
                if terms.iter().any(|t| t.powers.len() != *dim) {
                    return Err(FunctionError::InvalidParams("monomial powers must match dim".into()));
                }
                Arc::new(PolynomialFn { dim: *dim, terms: terms.clone() })
            }
            FnSpec::Sine { dim, coord, amplitude, frequency, phase } => {
                nonzero_dim(*dim)?;
                if coord >= dim {
                    return Err(FunctionError::InvalidParams(format!("sine coord {coord} ≥ dim {dim}")));
                }
                Arc::new(SineFn {
                    dim: *dim,
                    coord: *coord,
                    amplitude: *amplitude,
                    frequency: *frequency,
                    phase: *phase,
                })
            }
            FnSpec::RadialBarrier { center, radius, scale } => {
                positive("radius", *radius)?;
                nonzero_dim(center.len())?;
                Arc::new(RadialLogFn { center: Point::from_column_slice(center), radius: *radius, scale: -*scale })
            }
            FnSpec::LogRadial { center, radius, scale } => {
                positive("radius", *radius)?;
                nonzero_dim(center.len())?;
                Arc::new(RadialLogFn { center: Point::from_column_slice(center), radius: *radius, scale: *scale })
            }
            FnSpec::Sum { terms } => {
                let parts = terms.iter().map(|t| t.oracle()).collect::<Result<Vec<_>, _>>()?;
                let dim =
                    parts.first().map(|p| p.dim()).ok_or_else(|| FunctionError::InvalidParams("empty sum".into()))?;
                if parts.iter().any(|p| p.dim() != dim) {
                    return Err(FunctionError::InvalidParams("sum terms differ in dimension".into()));
                }
                Arc::new(Sum::new(dim, parts.into_iter().map(|p| (1.0, p)).collect()))
            }
            FnSpec::Scaled { factor, inner } => {
                let f = inner.oracle()?;
                Arc::new(Sum::new(f.dim(), vec![(*factor, f)]))
            }
        })
    }

    /// Builds a strictly convex builtin with its convexity metadata.
    /// Non-convex or auxiliary families are rejected.
    pub fn builtin(&self) -> Result<SmoothConvexFn, FunctionError> {
        let oracle = self.oracle()?;
        let (domain, meta) = match self {
            FnSpec::Quadratic { q, b } => {
                let (q, _) = quadratic_parts(q, b.as_deref())?;
                let min_eig = q.symmetric_eigenvalues().min();
                if !(min_eig > 0.0) {
                    return Err(FunctionError::NotPositiveDefinite(min_eig));
                }
                (None, ConvexMeta { margin: min_eig, coercive: true })
            }
            FnSpec::LogSumExp { .. } => (None, ConvexMeta { margin: 2.0 * LOG_SUM_EXP_EPSILON, coercive: true }),
            FnSpec::ExpSum { .. } => (None, ConvexMeta { margin: 0.0, coercive: false }),
            FnSpec::NormPower { p, .. } => {
                let margin = if *p == 2.0 { 2.0 } else { 0.0 };
                (None, ConvexMeta { margin, coercive: true })
            }
            FnSpec::LinearPlusQuadratic { c, .. } => (None, ConvexMeta { margin: 2.0 * c, coercive: true }),
            FnSpec::ExpHalfline { mu } => (
                Some(ConvexBody::half_line(0.0, 1.0).expect("valid half-line")),
                ConvexMeta { margin: *mu, coercive: true },
            ),
            FnSpec::TrigLift { center, radius, cos, sin, c, .. } => {
                let bound = harmonic_hessian_bound(cos, sin, *radius);
                let margin = 2.0 * c - bound;
                if !(margin > 0.0) {
                    return Err(FunctionError::NotStrictlyConvex(format!("trig_lift needs 2c > {bound}, got c = {c}")));
                }
                let center = Point::from_vec(center.clone().unwrap_or_else(|| vec![0.0, 0.0]));
                let disk =
                    ConvexBody::ball(center, *radius).map_err(|e| FunctionError::InvalidParams(e.to_string()))?;
                (Some(disk), ConvexMeta { margin, coercive: false })
            }
            other => {
                return Err(FunctionError::NotABuiltin(format!("{other:?}")));
            }
        };
        Ok(SmoothConvexFn::new(oracle, domain, meta))
    }
}

fn positive(name: &str, v: f64) -> Result<(), FunctionError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(FunctionError::InvalidParams(format!("{name} must be positive, got {v}")))
    }
}

fn nonzero_dim(dim: usize) -> Result<(), FunctionError> {
    if dim == 0 {
        Err(FunctionError::InvalidParams("dimension must be positive".into()))
    } else {
        Ok(())
    }
}

fn quadratic_parts(q: &[Vec<f64>], b: Option<&[f64]>) -> Result<(DMatrix<f64>, Point), FunctionError> {
    let n = q.len();
    if n == 0 || q.iter().any(|row| row.len() != n) {
        return Err(FunctionError::InvalidParams("Q must be a non-empty square matrix".into()));
    }
    let m = DMatrix::from_fn(n, n, |i, j| q[i][j]);
    let sym = (&m + m.transpose()) / 2.0;
    let b = match b {
        Some(b) if b.len() == n => Point::from_column_slice(b),
        Some(b) => return Err(FunctionError::InvalidParams(format!("b has length {} ≠ {n}", b.len()))),
        None => Point::zeros(n),
    };
    Ok((sym, b))
}

/// Bound on the spectral norm of the Hessian of the harmonic part of a
/// `trig_lift` over its disk: `Σ k(k−1)·|cₖ| / R²`.
pub fn harmonic_hessian_bound(cos: &[f64], sin: &[f64], radius: f64) -> f64 {
    let n = cos.len().max(sin.len());
    (1..=n)
        .map(|k| {
            let a = cos.get(k - 1).copied().unwrap_or(0.0);
            let b = sin.get(k - 1).copied().unwrap_or(0.0);
            (k * (k - 1)) as f64 * a.hypot(b)
        })
        .sum::<f64>()
        / (radius * radius)
}

#[derive(Debug)]
struct QuadraticFn {
    q: DMatrix<f64>,
    b: Point,
}

impl SmoothFn for QuadraticFn {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, x: &Point) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.b.dot(x)
    }

    fn gradient(&self, x: &Point) -> Point {
        &self.q * x + &self.b
    }

    fn hessian(&self, _x: &Point) -> Option<DMatrix<f64>> {
        Some(self.q.clone())
    }
}

#[derive(Debug)]
struct LogSumExpFn {
    a: DMatrix<f64>,
    c: Point,
    beta: f64,
    eps: f64,
}

impl LogSumExpFn {
    /// Softmax weights and the log-sum-exp value.
    fn weights(&self, x: &Point) -> (Point, f64) {
        let z = (&self.a * x + &self.c) * self.beta;
        let m = z.max();
        let e = z.map(|v| (v - m).exp());
        let s = e.sum();
        (e / s, (m + s.ln()) / self.beta)
    }
}

impl SmoothFn for LogSumExpFn {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn value(&self, x: &Point) -> f64 {
        self.weights(x).1 + self.eps * x.norm_squared()
    }

    fn gradient(&self, x: &Point) -> Point {
        let (p, _) = self.weights(x);
        self.a.transpose() * p + x * (2.0 * self.eps)
    }

    fn hessian(&self, x: &Point) -> Option<DMatrix<f64>> {
        let (p, _) = self.weights(x);
        let n = self.dim();
        let mean = self.a.transpose() * &p;
        let mut h = DMatrix::zeros(n, n);
        for (i, row) in self.a.row_iter().enumerate() {
            let r = row.transpose();
            h += &r * r.transpose() * p[i];
        }
        h -= &mean * mean.transpose();
        Some(h * self.beta + DMatrix::identity(n, n) * (2.0 * self.eps))
    }
}

#[derive(Debug)]
struct ExpSumFn {
    mu: f64,
    dim: usize,
}

impl SmoothFn for ExpSumFn {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Point) -> f64 {
        self.mu * x.iter().map(|v| v.exp_m1()).sum::<f64>()
    }

    fn gradient(&self, x: &Point) -> Point {
        x.map(|v| self.mu * v.exp())
    }

    fn hessian(&self, x: &Point) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_diagonal(&x.map(|v| self.mu * v.exp())))
    }
}

#[derive(Debug)]
struct NormPowerFn {
    p: f64,
    dim: usize,
}

impl SmoothFn for NormPowerFn {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Point) -> f64 {
        if self.p == 2.0 {
            x.norm_squared()
        } else {
            x.norm().powf(self.p)
        }
    }

    fn gradient(&self, x: &Point) -> Point {
        if self.p == 2.0 {
            return x * 2.0;
        }
        let r = x.norm();
        if r == 0.0 {
            Point::zeros(self.dim)
        } else {
            x * (self.p * r.powf(self.p - 2.0))
        }
    }

    fn hessian(&self, x: &Point) -> Option<DMatrix<f64>> {
        let n = self.dim;
        if self.p == 2.0 {
            return Some(DMatrix::identity(n, n) * 2.0);
        }
        let r = x.norm();
        if r == 0.0 {
            return Some(DMatrix::zeros(n, n));
        }
        let p = self.p;
        Some(DMatrix::identity(n, n) * (p * r.powf(p - 2.0)) + x * x.transpose() * (p * (p - 2.0) * r.powf(p - 4.0)))
    }
}

#[derive(Debug)]
struct TrigLiftFn {
    center: Point,
    radius: f64,
    constant: f64,
    cos: Vec<f64>,
    sin: Vec<f64>,
    c: f64,
}

impl TrigLiftFn {
    fn w(&self, x: &Point) -> Complex<f64> {
        Complex::new(x[0] - self.center[0], x[1] - self.center[1]) / self.radius
    }

    /// `Σ (aₖ − i bₖ)·f(k)` so that real parts give `aₖ Re + bₖ Im`.
    fn coeffs(&self) -> impl Iterator<Item = (usize, Complex<f64>)> + '_ {
        let n = self.cos.len().max(self.sin.len());
        (1..=n).map(move |k| {
            let a = self.cos.get(k - 1).copied().unwrap_or(0.0);
            let b = self.sin.get(k - 1).copied().unwrap_or(0.0);
            (k, Complex::new(a, -b))
        })
    }
}

impl SmoothFn for TrigLiftFn {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &Point) -> f64 {
        let w = self.w(x);
        let harmonic: f64 = self.coeffs().map(|(k, c)| (c * w.powu(k as u32)).re).sum();
        self.constant + harmonic + self.c * (x - &self.center).norm_squared()
    }

    fn gradient(&self, x: &Point) -> Point {
        let w = self.w(x);
        // d/dx Re(c wᵏ) = Re(c k wᵏ⁻¹)/R,  d/dy = −Im(c k wᵏ⁻¹)/R.
        let d: Complex<f64> =
            self.coeffs().map(|(k, c)| c * w.powu(k as u32 - 1) * k as f64).sum::<Complex<f64>>() / self.radius;
        Point::from_vec(vec![d.re, -d.im]) + (x - &self.center) * (2.0 * self.c)
    }

    fn hessian(&self, x: &Point) -> Option<DMatrix<f64>> {
        let w = self.w(x);
        let d2: Complex<f64> = self
            .coeffs()
            .filter(|(k, _)| *k >= 2)
            .map(|(k, c)| c * w.powu(k as u32 - 2) * (k * (k - 1)) as f64)
            .sum::<Complex<f64>>()
            / (self.radius * self.radius);
        let mut h = DMatrix::from_row_slice(2, 2, &[d2.re, -d2.im, -d2.im, -d2.re]);
        h += DMatrix::identity(2, 2) * (2.0 * self.c);
        Some(h)
    }
}

#[derive(Debug)]
struct PolynomialFn {
    dim: usize,
    terms: Vec<Monomial>,
}

fn pow_deriv(x: f64, p: u32, order: u32) -> f64 {
    if order > p {
        return 0.0;
    }
    let factor: f64 = (0..order).map(|j| (p - j) as f64).product();
    factor * x.powi((p - order) as i32)
}

impl SmoothFn for PolynomialFn {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Point) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coef * t.powers.iter().enumerate().map(|(i, &p)| x[i].powi(p as i32)).product::<f64>())
            .sum()
    }

    fn gradient(&self, x: &Point) -> Point {
        Point::from_fn(self.dim, |k, _| {
            self.terms
                .iter()
                .map(|t| {
                    t.coef
                        * t.powers
                            .iter()
                            .enumerate()
                            .map(|(i, &p)| pow_deriv(x[i], p, u32::from(i == k)))
                            .product::<f64>()
                })
                .sum()
        })
    }

    fn hessian(&self, x: &Point) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_fn(self.dim, self.dim, |k, l| {
            self.terms
                .iter()
                .map(|t| {
                    t.coef
                        * t.powers
                            .iter()
                            .enumerate()
                            .map(|(i, &p)| pow_deriv(x[i], p, u32::from(i == k) + u32::from(i == l)))
                            .product::<f64>()
                })
                .sum()
        }))
    }
}

#[derive(Debug)]
struct SineFn {
    dim: usize,
    coord: usize,
    amplitude: f64,
    frequency: f64,
    phase: f64,
}

impl SmoothFn for SineFn {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Point) -> f64 {
        self.amplitude * (self.frequency * x[self.coord] + self.phase).sin()
    }

    fn gradient(&self, x: &Point) -> Point {
        let mut g = Point::zeros(self.dim);
        g[self.coord] = self.amplitude * self.frequency * (self.frequency * x[self.coord] + self.phase).cos();
        g
    }

    fn hessian(&self, x: &Point) -> Option<DMatrix<f64>> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        h[(self.coord, self.coord)] =
            -self.amplitude * self.frequency * self.frequency * (self.frequency * x[self.coord] + self.phase).sin();
        Some(h)
    }
}

/// `scale · log(1 − ‖x − c‖²/r²)`, `+∞` where the argument is not positive.
#[derive(Debug)]
struct RadialLogFn {
    center: Point,
    radius: f64,
    scale: f64,
}

impl RadialLogFn {
    fn slack(&self, x: &Point) -> f64 {
        1.0 - (x - &self.center).norm_squared() / (self.radius * self.radius)
    }
}

impl SmoothFn for RadialLogFn {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &Point) -> f64 {
        let s = self.slack(x);
        if s > 0.0 {
            self.scale * s.ln()
        } else {
            f64::INFINITY
        }
    }

    fn gradient(&self, x: &Point) -> Point {
        let s = self.slack(x);
        let r2 = self.radius * self.radius;
        (x - &self.center) * (-2.0 * self.scale / (r2 * s))
    }

    fn hessian(&self, x: &Point) -> Option<DMatrix<f64>> {
        let s = self.slack(x);
        let r2 = self.radius * self.radius;
        let d = x - &self.center;
        let n = self.dim();
        Some(
            (DMatrix::identity(n, n) * (-2.0 / (r2 * s)) - &d * d.transpose() * (4.0 / (r2 * r2 * s * s))) * self.scale,
        )
    }
}
