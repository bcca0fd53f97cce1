//! Box-shaped spatial domains with composite quadrature, grid fields and
//! Nyström kernel matrices.
//!
//! Nodes are stored row-major with axis 0 varying slowest: in 2D the node
//! with per-axis indices `(i, j)` has flat index `i * n1 + j`. Every
//! reduction over nodes runs in ascending flat index order so results do not
//! depend on thread count or platform.

mod field;
mod kernel;

use std::sync::Arc;

use thiserror::Error;

use crate::scalar::Real;

pub use field::{Field, FieldPair, POPULATIONS};
pub use kernel::KernelMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("axis {axis}: extent [{lo}, {hi}] is empty (need lo < hi)")]
    InvalidExtent { axis: usize, lo: f64, hi: f64 },
    #[error("axis {axis}: {nodes} nodes requested, at least 2 required")]
    TooFewNodes { axis: usize, nodes: usize },
    #[error("domain dimension {0} unsupported (expected 1 or 2)")]
    UnsupportedDimension(usize),
    #[error("operands live on different domains")]
    DomainMismatch,
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("kernel is not finite at node pair ({row}, {col})")]
    NonFiniteKernel { row: usize, col: usize },
}

/// Composite rule used to build quadrature weights along each axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QuadratureRule {
    /// Cell centres, equal weights `h = (b - a) / n`.
    Midpoint,
    /// Endpoints included, interior weight `h = (b - a) / (n - 1)`, ends `h / 2`.
    Trapezoid,
}

impl QuadratureRule {
    pub fn name(self) -> &'static str {
        match self {
            QuadratureRule::Midpoint => "midpoint",
            QuadratureRule::Trapezoid => "trapezoid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis<T> {
    pub lo: T,
    pub hi: T,
    pub nodes: usize,
}

impl<T: Real> Axis<T> {
    pub fn new(lo: T, hi: T, nodes: usize) -> Self {
        Self { lo, hi, nodes }
    }

    fn nodes_and_weights(&self, rule: QuadratureRule) -> (Vec<T>, Vec<T>) {
        let n = self.nodes;
        let len = self.hi - self.lo;
        match rule {
            QuadratureRule::Midpoint => {
                let h = len / T::from_usize_lossy(n);
                let half = T::lit(0.5);
                let x = (0..n)
                    .map(|i| self.lo + (T::from_usize_lossy(i) + half) * h)
                    .collect();
                (x, vec![h; n])
            }
            QuadratureRule::Trapezoid => {
                let h = len / T::from_usize_lossy(n - 1);
                let x = (0..n)
                    .map(|i| {
                        if i + 1 == n {
                            self.hi
                        } else {
                            self.lo + T::from_usize_lossy(i) * h
                        }
                    })
                    .collect();
                let mut w = vec![h; n];
                w[0] = h * T::lit(0.5);
                w[n - 1] = h * T::lit(0.5);
                (x, w)
            }
        }
    }
}

/// Discretized compact box `Ω` together with its quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialDomain<T> {
    axes: Vec<Axis<T>>,
    rule: QuadratureRule,
    coords: Vec<T>,
    weights: Vec<T>,
    measure: T,
}

impl<T: Real> SpatialDomain<T> {
    /// Builds the tensor-product grid and wraps it in an `Arc` so fields
    /// can share it.
    pub fn build(axes: &[Axis<T>], rule: QuadratureRule) -> Result<Arc<Self>, GridError> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(GridError::UnsupportedDimension(axes.len()));
        }
        for (axis, ax) in axes.iter().enumerate() {
            if !(ax.lo < ax.hi) || !ax.lo.is_finite() || !ax.hi.is_finite() {
                return Err(GridError::InvalidExtent {
                    axis,
                    lo: ax.lo.as_f64(),
                    hi: ax.hi.as_f64(),
                });
            }
            if ax.nodes < 2 {
                return Err(GridError::TooFewNodes { axis, nodes: ax.nodes });
            }
        }

        let per_axis: Vec<_> = axes.iter().map(|a| a.nodes_and_weights(rule)).collect();
        let dim = axes.len();
        let total: usize = axes.iter().map(|a| a.nodes).product();
        let mut coords = Vec::with_capacity(total * dim);
        let mut weights = Vec::with_capacity(total);
        match dim {
            1 => {
                let (x, w) = &per_axis[0];
                coords.extend_from_slice(x);
                weights.extend_from_slice(w);
            }
            _ => {
                let (x0, w0) = &per_axis[0];
                let (x1, w1) = &per_axis[1];
                for i in 0..x0.len() {
                    for j in 0..x1.len() {
                        coords.push(x0[i]);
                        coords.push(x1[j]);
                        weights.push(w0[i] * w1[j]);
                    }
                }
            }
        }
        let measure = axes.iter().fold(T::one(), |m, a| m * (a.hi - a.lo));
        Ok(Arc::new(Self {
            axes: axes.to_vec(),
            rule,
            coords,
            weights,
            measure,
        }))
    }

    /// Uniform 1D grid on `[lo, hi]`.
    pub fn interval(lo: T, hi: T, nodes: usize, rule: QuadratureRule) -> Result<Arc<Self>, GridError> {
        Self::build(&[Axis::new(lo, hi, nodes)], rule)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis<T>] {
        &self.axes
    }

    pub fn rule(&self) -> QuadratureRule {
        self.rule
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Coordinates of node `a`.
    pub fn point(&self, a: usize) -> &[T] {
        let d = self.dim();
        &self.coords[a * d..(a + 1) * d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.coords.chunks_exact(self.dim())
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Exact volume `Π (b_d - a_d)` of the box.
    pub fn measure(&self) -> T {
        self.measure
    }

    /// Euclidean distance between nodes `a` and `b`.
    pub fn distance(&self, a: usize, b: usize) -> T {
        self.point(a)
            .iter()
            .zip(self.point(b))
            .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
            .sqrt()
    }

    /// `Σ_a q_a f_a g_a` over raw value slices.
    pub fn weighted_dot(&self, f: &[T], g: &[T]) -> T {
        let mut acc = T::zero();
        for ((&q, &x), &y) in self.weights.iter().zip(f).zip(g) {
            acc += q * x * y;
        }
        acc
    }

    /// Quadrature of a function sampled at the nodes.
    pub fn integrate(&self, f: &[T]) -> T {
        let mut acc = T::zero();
        for (&q, &x) in self.weights.iter().zip(f) {
            acc += q * x;
        }
        acc
    }

    pub fn same_as(self: &Arc<Self>, other: &Arc<Self>) -> bool {
        Arc::ptr_eq(self, other) || **self == **other
    }
}
