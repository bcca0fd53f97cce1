use std::sync::Arc;

use super::{Field, GridError, SpatialDomain};
use crate::scalar::Real;

/// Nyström matrix of an integral operator `z ↦ ∫_Ω w(·, r′) z(r′) dr′`.
///
/// Entry `(a, b)` holds `w(r_a, r_b) · q_b`, so a matrix-vector product
/// evaluates the quadrature of the integral at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix<T> {
    domain: Arc<SpatialDomain<T>>,
    entries: Vec<T>,
    hs_norm: T,
    zero: bool,
}

impl<T: Real> KernelMatrix<T> {
    pub fn assemble(
        domain: &Arc<SpatialDomain<T>>,
        kernel: impl Fn(&[T], &[T]) -> T,
    ) -> Result<Self, GridError> {
        let n = domain.len();
        let q = domain.weights();
        let mut entries = Vec::with_capacity(n * n);
        let mut hs = T::zero();
        let mut zero = true;
        for a in 0..n {
            let ra = domain.point(a);
            let mut row = T::zero();
            for b in 0..n {
                let w = kernel(ra, domain.point(b));
                if !w.is_finite() {
                    return Err(GridError::NonFiniteKernel { row: a, col: b });
                }
                zero &= w == T::zero();
                row += q[b] * w * w;
                entries.push(w * q[b]);
            }
            hs += q[a] * row;
        }
        Ok(Self {
            domain: Arc::clone(domain),
            entries,
            hs_norm: hs.sqrt(),
            zero,
        })
    }

    pub fn zero(domain: &Arc<SpatialDomain<T>>) -> Self {
        let n = domain.len();
        Self {
            domain: Arc::clone(domain),
            entries: vec![T::zero(); n * n],
            hs_norm: T::zero(),
            zero: true,
        }
    }

    pub fn domain(&self) -> &Arc<SpatialDomain<T>> {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.len()
    }

    /// Weighted entry `w(r_a, r_b) · q_b`.
    #[inline]
    pub fn entry(&self, a: usize, b: usize) -> T {
        self.entries[a * self.dim() + b]
    }

    pub fn row(&self, a: usize) -> &[T] {
        let n = self.dim();
        &self.entries[a * n..(a + 1) * n]
    }

    /// Discrete Hilbert-Schmidt norm `sqrt(Σ_{a,b} q_a q_b w(r_a, r_b)²)`.
    pub fn hs_norm(&self) -> T {
        self.hs_norm
    }

    /// True when every sampled kernel value is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// `out[a] = Σ_b M[a, b] v[b]`, ascending in `b`.
    pub fn apply_into(&self, v: &[T], out: &mut [T]) {
        let n = self.dim();
        debug_assert_eq!(v.len(), n);
        for (a, o) in out.iter_mut().enumerate() {
            let row = &self.entries[a * n..(a + 1) * n];
            let mut acc = T::zero();
            for (&m, &x) in row.iter().zip(v) {
                acc += m * x;
            }
            *o = acc;
        }
    }

    pub fn apply(&self, f: &Field<T>) -> Result<Field<T>, GridError> {
        if !self.domain.same_as(f.domain()) {
            return Err(GridError::DomainMismatch);
        }
        let mut out = vec![T::zero(); self.dim()];
        self.apply_into(f.values(), &mut out);
        Field::from_values(&self.domain, out)
    }
}
