use std::collections::VecDeque;

use super::SimError;
use crate::grid::FieldPair;
use crate::scalar::Real;

/// Past states on the uniform step grid `t_k = k Δt`, `k ≥ 0`, preceded by
/// a constant prehistory `φ` for `t ≤ 0`. Only the most recent
/// `ceil(d̄ / Δt) + 2` snapshots are kept; delayed values between grid
/// times are linearly interpolated.
#[derive(Debug, Clone)]
pub struct HistoryBuffer<T> {
    dt: T,
    prehistory: Vec<T>,
    snapshots: VecDeque<Vec<T>>,
    // step index of snapshots[0]
    first: usize,
    capacity: usize,
}

impl<T: Real> HistoryBuffer<T> {
    /// Starts at `t = 0` with the single snapshot `z(0) = φ`.
    pub fn new(prehistory: &FieldPair<T>, dt: T, max_delay: T) -> Self {
        let phi = prehistory.stacked();
        let capacity = Self::capacity_for(dt, max_delay);
        let mut snapshots = VecDeque::with_capacity(capacity);
        snapshots.push_back(phi.clone());
        Self {
            dt,
            prehistory: phi,
            snapshots,
            first: 0,
            capacity,
        }
    }

    pub fn capacity_for(dt: T, max_delay: T) -> usize {
        (max_delay / dt).ceil().to_usize().unwrap_or(0) + 2
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// Step index of the newest snapshot.
    pub fn last_index(&self) -> usize {
        self.first + self.snapshots.len() - 1
    }

    pub fn last_time(&self) -> T {
        T::from_usize_lossy(self.last_index()) * self.dt
    }

    pub fn oldest_time(&self) -> T {
        T::from_usize_lossy(self.first) * self.dt
    }

    pub fn last_state(&self) -> &[T] {
        self.snapshots.back().expect("history is never empty")
    }

    /// Appends the state at the next grid time, evicting the oldest
    /// snapshot once full.
    pub fn push(&mut self, state: &[T]) {
        if self.snapshots.len() == self.capacity {
            let mut recycled = self.snapshots.pop_front().expect("non-empty");
            self.first += 1;
            recycled.copy_from_slice(state);
            self.snapshots.push_back(recycled);
        } else {
            self.snapshots.push_back(state.to_vec());
        }
    }

    /// Value of stacked component `slot` (`population · n + node`) at time
    /// `s`. `head` is the state at a time at or after the newest snapshot
    /// (the point where the right-hand side is being evaluated); times past
    /// the newest snapshot interpolate towards it.
    pub fn value(&self, slot: usize, s: T, head: Option<(T, &[T])>) -> Result<T, SimError<T>> {
        let last = self.last_state();
        if let Some((th, hv)) = head {
            if s >= th {
                return Ok(hv[slot]);
            }
            let tl = self.last_time();
            if s > tl {
                let w = (s - tl) / (th - tl);
                return Ok(last[slot] + w * (hv[slot] - last[slot]));
            }
        }
        if s <= T::zero() {
            return Ok(self.prehistory[slot]);
        }
        let pos = s / self.dt;
        let k = pos.floor().to_usize().unwrap_or(usize::MAX);
        if k >= self.last_index() {
            return Ok(last[slot]);
        }
        if k < self.first {
            return Err(SimError::HistoryUnderflow {
                time: s.as_f64(),
                oldest: self.oldest_time().as_f64(),
            });
        }
        let frac = pos - T::from_usize_lossy(k);
        let a = self.snapshots[k - self.first][slot];
        let b = self.snapshots[k + 1 - self.first][slot];
        Ok(a + frac * (b - a))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::grid::{QuadratureRule, SpatialDomain};

    fn setup() -> (Arc<SpatialDomain<f64>>, HistoryBuffer<f64>) {
        let d = SpatialDomain::interval(0.0, 1.0, 2, QuadratureRule::Midpoint).unwrap();
        let phi = FieldPair::constant(&d, 1.0, -1.0);
        (d.clone(), HistoryBuffer::new(&phi, 0.5, 1.0))
    }

    #[test]
    fn capacity_covers_max_delay() {
        let (_, h) = setup();
        assert_eq!(h.capacity(), 4);
        assert_eq!(HistoryBuffer::<f64>::capacity_for(0.3, 1.0), 6);
        assert_eq!(HistoryBuffer::<f64>::capacity_for(0.1, 0.0), 2);
    }

    #[test]
    fn prehistory_and_interpolation() {
        let (_, mut h) = setup();
        assert_eq!(h.value(0, -3.0, None).unwrap(), 1.0);
        assert_eq!(h.value(2, 0.0, None).unwrap(), -1.0);
        // z(0.5) = 3 for slot 0
        h.push(&[3.0, 3.0, 0.0, 0.0]);
        assert_eq!(h.value(0, 0.25, None).unwrap(), 2.0);
        assert_eq!(h.value(0, 0.5, None).unwrap(), 3.0);
        // towards a head state at t = 1
        let head = [5.0, 5.0, 0.0, 0.0];
        assert_eq!(h.value(0, 0.75, Some((1.0, &head))).unwrap(), 4.0);
        assert_eq!(h.value(0, 1.0, Some((1.0, &head))).unwrap(), 5.0);
    }

    #[test]
    fn evicts_and_underflows() {
        let (_, mut h) = setup();
        for k in 1..=10 {
            let v = k as f64;
            h.push(&[v, v, v, v]);
        }
        assert_eq!(h.len(), 4);
        assert_eq!(h.last_index(), 10);
        assert_eq!(h.oldest_time(), 3.5);
        // anything in [t - d̄ - Δt, t] is available
        assert_eq!(h.value(1, 4.0, None).unwrap(), 8.0);
        assert_eq!(h.value(1, 3.75, None).unwrap(), 7.5);
        assert!(matches!(h.value(1, 3.0, None), Err(SimError::HistoryUnderflow { .. })));
    }
}
