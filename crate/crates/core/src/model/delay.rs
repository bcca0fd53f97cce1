use std::sync::Arc;

use crate::grid::{GridError, SpatialDomain};
use crate::scalar::Real;

/// Transmission delays `d(r_a, r_b)` sampled on node pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayMatrix<T> {
    n: usize,
    entries: Vec<T>,
}

impl<T: Real> DelayMatrix<T> {
    pub fn assemble(
        domain: &Arc<SpatialDomain<T>>,
        delay: impl Fn(&[T], &[T]) -> T,
    ) -> Result<Self, GridError> {
        let n = domain.len();
        let mut entries = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                let d = delay(domain.point(a), domain.point(b));
                if !d.is_finite() {
                    return Err(GridError::NonFiniteKernel { row: a, col: b });
                }
                entries.push(d);
            }
        }
        Ok(Self { n, entries })
    }

    pub fn zero(domain: &Arc<SpatialDomain<T>>) -> Self {
        let n = domain.len();
        Self {
            n,
            entries: vec![T::zero(); n * n],
        }
    }

    /// Finite propagation speed: `min(|r_a − r_b| / speed, cap)`.
    pub fn distance_proportional(domain: &Arc<SpatialDomain<T>>, speed: T, cap: T) -> Result<Self, GridError> {
        Self::assemble(domain, |a, b| {
            let dist = a
                .iter()
                .zip(b)
                .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
                .sqrt();
            (dist / speed).min(cap)
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn entry(&self, a: usize, b: usize) -> T {
        self.entries[a * self.n + b]
    }

    pub fn row(&self, a: usize) -> &[T] {
        &self.entries[a * self.n..(a + 1) * self.n]
    }

    pub fn max_entry(&self) -> T {
        self.entries.iter().fold(T::zero(), |m, &d| m.max(d))
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&d| d == T::zero())
    }

    pub(crate) fn find_outside(&self, max: T) -> Option<(usize, usize, T)> {
        self.entries
            .iter()
            .position(|&d| !(d >= T::zero() && d <= max))
            .map(|i| (i / self.n, i % self.n, self.entries[i]))
    }
}
