use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::{Covector, Point};

/// Evaluation oracle for a differentiable function on (a subset of) `R^n`.
///
/// Values outside the natural domain are `+∞`; gradients there are
/// unspecified and never requested by the solvers.
pub trait SmoothFn: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &Point) -> f64;
    fn gradient(&self, x: &Point) -> Point;
    fn hessian(&self, _x: &Point) -> Option<DMatrix<f64>> {
        None
    }
}

pub type Oracle = Arc<dyn SmoothFn>;

/// `Σ wᵢ fᵢ`.
#[derive(Debug, Clone)]
pub struct Sum {
    dim: usize,
    terms: Vec<(f64, Oracle)>,
}

impl Sum {
    pub fn new(dim: usize, terms: Vec<(f64, Oracle)>) -> Self {
        debug_assert!(terms.iter().all(|(_, f)| f.dim() == dim));
        Self { dim, terms }
    }
}

impl SmoothFn for Sum {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Point) -> f64 {
        self.terms.iter().map(|(w, f)| w * f.value(x)).sum()
    }

    fn gradient(&self, x: &Point) -> Point {
        self.terms.iter().fold(Point::zeros(self.dim), |acc, (w, f)| acc + f.gradient(x) * *w)
    }

    fn hessian(&self, x: &Point) -> Option<DMatrix<f64>> {
        self.terms.iter().try_fold(DMatrix::zeros(self.dim, self.dim), |acc, (w, f)| f.hessian(x).map(|h| acc + h * *w))
    }
}

/// `f(x) + ⟨η, x⟩`.
#[derive(Debug, Clone)]
pub struct Tilted {
    inner: Oracle,
    tilt: Covector,
}

impl Tilted {
    pub fn new(inner: Oracle, tilt: Covector) -> Self {
        Self { inner, tilt }
    }
}

impl SmoothFn for Tilted {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &Point) -> f64 {
        self.inner.value(x) + self.tilt.dot(x)
    }

    fn gradient(&self, x: &Point) -> Point {
        self.inner.gradient(x) + &self.tilt
    }

    fn hessian(&self, x: &Point) -> Option<DMatrix<f64>> {
        self.inner.hessian(x)
    }
}

/// `f(x)·g(x)`.
#[derive(Debug, Clone)]
pub struct Product {
    left: Oracle,
    right: Oracle,
}

impl Product {
    pub fn new(left: Oracle, right: Oracle) -> Self {
        Self { left, right }
    }
}

impl SmoothFn for Product {
    fn dim(&self) -> usize {
        self.left.dim()
    }

    fn value(&self, x: &Point) -> f64 {
        self.left.value(x) * self.right.value(x)
    }

    fn gradient(&self, x: &Point) -> Point {
        self.left.gradient(x) * self.right.value(x) + self.right.gradient(x) * self.left.value(x)
    }

    fn hessian(&self, x: &Point) -> Option<DMatrix<f64>> {
        let (ha, hb) = (self.left.hessian(x)?, self.right.hessian(x)?);
        let (ga, gb) = (self.left.gradient(x), self.right.gradient(x));
        let cross = &ga * gb.transpose();
        Some(ha * self.right.value(x) + hb * self.left.value(x) + &cross + cross.transpose())
    }
}

/// `⟨a, x⟩ + c`.
#[derive(Debug, Clone)]
pub struct Affine {
    pub a: Covector,
    pub c: f64,
}

impl SmoothFn for Affine {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn value(&self, x: &Point) -> f64 {
        self.a.dot(x) + self.c
    }

    fn gradient(&self, _x: &Point) -> Point {
        self.a.clone()
    }

    fn hessian(&self, _x: &Point) -> Option<DMatrix<f64>> {
        let n = self.a.len();
        Some(DMatrix::zeros(n, n))
    }
}

/// Wraps a closure pair as an oracle; used for ad-hoc test functions.
pub struct FnOracle<V, G> {
    dim: usize,
    value: V,
    gradient: G,
}

impl<V, G> FnOracle<V, G>
where
    V: Fn(&Point) -> f64 + Send + Sync,
    G: Fn(&Point) -> Point + Send + Sync,
{
    pub fn new(dim: usize, value: V, gradient: G) -> Self {
        Self { dim, value, gradient }
    }
}

impl<V, G> fmt::Debug for FnOracle<V, G> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnOracle").field("dim", &self.dim).finish()
    }
}

impl<V, G> SmoothFn for FnOracle<V, G>
where
    V: Fn(&Point) -> f64 + Send + Sync,
    G: Fn(&Point) -> Point + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Point) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &Point) -> Point {
        (self.gradient)(x)
    }
}

/// `Σ wᵢ fᵢ` as a shared oracle.
pub fn sum(dim: usize, terms: Vec<(f64, Oracle)>) -> Oracle {
    Arc::new(Sum::new(dim, terms))
}

pub fn tilt(inner: Oracle, eta: &Covector) -> Oracle {
    Arc::new(Tilted::new(inner, eta.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn product_rule_hessian() {
        let a: Oracle = Arc::new(Affine { a: dvector![1.0, 0.0], c: 0.0 });
        let b: Oracle = Arc::new(Affine { a: dvector![0.0, 1.0], c: 0.0 });
        let p = Product::new(a, b);
        let x = dvector![2.0, 3.0];
        assert_eq!(p.value(&x), 6.0);
        assert_eq!(p.gradient(&x), dvector![3.0, 2.0]);
        let h = p.hessian(&x).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn tilt_shifts_gradient() {
        let a: Oracle = Arc::new(Affine { a: dvector![1.0, 1.0], c: 2.0 });
        let t = tilt(a, &dvector![-1.0, 0.5]);
        let x = dvector![1.0, 2.0];
        assert_eq!(t.value(&x), 5.0 - 1.0 + 1.0);
        assert_eq!(t.gradient(&x), dvector![0.0, 1.5]);
    }
}
