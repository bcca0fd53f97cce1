use std::sync::Arc;

use super::{GridError, SpatialDomain};
use crate::scalar::Real;

/// Number of populations carried by a [`FieldPair`].
pub const POPULATIONS: usize = 2;

/// Grid samples of a scalar function on a [`SpatialDomain`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    domain: Arc<SpatialDomain<T>>,
    values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn from_values(domain: &Arc<SpatialDomain<T>>, values: Vec<T>) -> Result<Self, GridError> {
        if values.len() != domain.len() {
            return Err(GridError::LengthMismatch {
                expected: domain.len(),
                got: values.len(),
            });
        }
        Ok(Self {
            domain: Arc::clone(domain),
            values,
        })
    }

    pub fn constant(domain: &Arc<SpatialDomain<T>>, c: T) -> Self {
        Self {
            domain: Arc::clone(domain),
            values: vec![c; domain.len()],
        }
    }

    pub fn zeros(domain: &Arc<SpatialDomain<T>>) -> Self {
        Self::constant(domain, T::zero())
    }

    /// Samples `f` at every node.
    pub fn from_fn(domain: &Arc<SpatialDomain<T>>, mut f: impl FnMut(&[T]) -> T) -> Self {
        let values = domain.points().map(&mut f).collect();
        Self {
            domain: Arc::clone(domain),
            values,
        }
    }

    pub fn domain(&self) -> &Arc<SpatialDomain<T>> {
        &self.domain
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn check(&self, other: &Self) -> Result<(), GridError> {
        if self.domain.same_as(&other.domain) {
            Ok(())
        } else {
            Err(GridError::DomainMismatch)
        }
    }

    /// Discrete `L²(Ω)` inner product `Σ_a q_a f_a g_a`.
    pub fn l2_inner(&self, other: &Self) -> Result<T, GridError> {
        self.check(other)?;
        Ok(self.domain.weighted_dot(&self.values, &other.values))
    }

    pub fn l2_norm(&self) -> T {
        self.domain.weighted_dot(&self.values, &self.values).sqrt()
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            domain: Arc::clone(&self.domain),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self, GridError> {
        self.check(other)?;
        Ok(Self {
            domain: Arc::clone(&self.domain),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self, GridError> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, GridError> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| c * v)
    }

    pub fn min_value(&self) -> T {
        self.values.iter().fold(T::infinity(), |m, &v| m.min(v))
    }

    pub fn max_value(&self) -> T {
        self.values.iter().fold(T::neg_infinity(), |m, &v| m.max(v))
    }
}

/// States of both populations on a common domain; an element of the
/// discretized `L²(Ω)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPair<T> {
    parts: [Field<T>; POPULATIONS],
}

impl<T: Real> FieldPair<T> {
    pub fn new(first: Field<T>, second: Field<T>) -> Result<Self, GridError> {
        first.check(&second)?;
        Ok(Self {
            parts: [first, second],
        })
    }

    pub fn zeros(domain: &Arc<SpatialDomain<T>>) -> Self {
        Self {
            parts: [Field::zeros(domain), Field::zeros(domain)],
        }
    }

    pub fn constant(domain: &Arc<SpatialDomain<T>>, c1: T, c2: T) -> Self {
        Self {
            parts: [Field::constant(domain, c1), Field::constant(domain, c2)],
        }
    }

    /// Splits a stacked vector `[first; second]` of length `2n`.
    pub fn from_stacked(domain: &Arc<SpatialDomain<T>>, stacked: &[T]) -> Result<Self, GridError> {
        let n = domain.len();
        if stacked.len() != 2 * n {
            return Err(GridError::LengthMismatch {
                expected: 2 * n,
                got: stacked.len(),
            });
        }
        Ok(Self {
            parts: [
                Field::from_values(domain, stacked[..n].to_vec())?,
                Field::from_values(domain, stacked[n..].to_vec())?,
            ],
        })
    }

    pub fn stacked(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(2 * self.domain().len());
        v.extend_from_slice(self.parts[0].values());
        v.extend_from_slice(self.parts[1].values());
        v
    }

    pub fn domain(&self) -> &Arc<SpatialDomain<T>> {
        self.parts[0].domain()
    }

    pub fn first(&self) -> &Field<T> {
        &self.parts[0]
    }

    pub fn second(&self) -> &Field<T> {
        &self.parts[1]
    }

    /// Population `i` (zero based).
    pub fn get(&self, i: usize) -> &Field<T> {
        &self.parts[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Field<T> {
        &mut self.parts[i]
    }

    pub fn parts(&self) -> &[Field<T>; POPULATIONS] {
        &self.parts
    }

    pub fn into_parts(self) -> [Field<T>; POPULATIONS] {
        self.parts
    }

    /// `sqrt(‖f₁‖² + ‖f₂‖²)`.
    pub fn pair_norm(&self) -> T {
        let d = self.domain();
        let a = d.weighted_dot(self.parts[0].values(), self.parts[0].values());
        let b = d.weighted_dot(self.parts[1].values(), self.parts[1].values());
        (a + b).sqrt()
    }

    pub fn sup_norm(&self) -> T {
        self.parts[0].sup_norm().max(self.parts[1].sup_norm())
    }

    pub fn inner(&self, other: &Self) -> Result<T, GridError> {
        Ok(self.parts[0].l2_inner(&other.parts[0])? + self.parts[1].l2_inner(&other.parts[1])?)
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T + Copy) -> Result<Self, GridError> {
        Ok(Self {
            parts: [
                self.parts[0].zip_map(&other.parts[0], f)?,
                self.parts[1].zip_map(&other.parts[1], f)?,
            ],
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self, GridError> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, GridError> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: T) -> Self {
        Self {
            parts: [self.parts[0].scale(c), self.parts[1].scale(c)],
        }
    }

    /// `pair_norm(self - other)`.
    pub fn distance(&self, other: &Self) -> Result<T, GridError> {
        Ok(self.sub(other)?.pair_norm())
    }

    pub fn is_finite(&self) -> bool {
        self.parts.iter().all(Field::is_finite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::QuadratureRule;

    fn unit(n: usize) -> Arc<SpatialDomain<f64>> {
        SpatialDomain::interval(0.0, 1.0, n, QuadratureRule::Trapezoid).unwrap()
    }

    #[test]
    fn inner_product_examples() {
        let d = unit(5);
        let one = Field::constant(&d, 1.0);
        assert_eq!(one.l2_inner(&one).unwrap(), 1.0);
        let zero = Field::zeros(&d);
        let g = Field::from_fn(&d, |r| r[0].sin() + 3.0);
        assert_eq!(zero.l2_inner(&g).unwrap(), 0.0);

        let d = unit(101);
        let r = Field::from_fn(&d, |p| p[0]);
        // ∫₀¹ r² dr = 1/3; trapezoid error h²/6 = 1.67e-5
        assert!((r.l2_inner(&r).unwrap() - 1.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn norms() {
        let d = unit(5);
        assert_eq!(Field::constant(&d, 2.0).l2_norm(), 2.0);
        assert_eq!(Field::zeros(&d).l2_norm(), 0.0);
        let p = FieldPair::constant(&d, 3.0, 4.0);
        assert!((p.pair_norm() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn domain_mismatch_detected() {
        let a = Field::constant(&unit(5), 1.0);
        let b = Field::constant(&unit(6), 1.0);
        assert_eq!(a.l2_inner(&b).unwrap_err(), GridError::DomainMismatch);
        // structurally equal domains built separately are compatible
        let c = Field::constant(&unit(5), 2.0);
        assert_eq!(a.l2_inner(&c).unwrap(), 2.0);
        assert!(FieldPair::new(a, b).is_err());
    }

    #[test]
    fn length_checked() {
        let d = unit(4);
        assert_eq!(
            Field::from_values(&d, vec![1.0; 3]).unwrap_err(),
            GridError::LengthMismatch { expected: 4, got: 3 }
        );
    }

    #[test]
    fn trapezoid_refinement_order() {
        // f(r) = sin(πr): ∫₀¹ f² = 1/2
        let exact = 0.5;
        let err = |n: usize| {
            let d = unit(n);
            let f = Field::from_fn(&d, |p| (std::f64::consts::PI * p[0]).sin() + p[0] * p[0]);
            // ∫ (sin πr + r²)² = 1/2 + 2∫ r² sin πr + 1/5
            let cross = 2.0 * (std::f64::consts::PI.powi(2) - 4.0) / std::f64::consts::PI.powi(3);
            (f.l2_inner(&f).unwrap() - (exact + cross + 0.2)).abs()
        };
        let e: Vec<f64> = [11, 21, 41, 81].iter().map(|&n| err(n)).collect();
        for w in e.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.8, "order {order}");
        }
    }
}
