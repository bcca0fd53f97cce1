//! Non-decreasing continuous activation functions.

use thiserror::Error;

use crate::roots;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActivationError {
    #[error("logistic activation needs max > 0 and steepness > 0 (got max={max}, steepness={steepness})")]
    Logistic { max: f64, steepness: f64 },
    #[error("clamp activation needs slope >= 0 and lo <= hi (got slope={slope}, lo={lo}, hi={hi})")]
    Clamp { slope: f64, lo: f64, hi: f64 },
    #[error("linear activation needs slope >= 0 (got {0})")]
    Linear(f64),
    #[error("activation parameter is not finite")]
    NonFinite,
}

/// Catalog of supported activation families. All members are continuous and
/// non-decreasing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation<T> {
    /// `max / (1 + exp(-steepness (s - threshold)))`, range `(0, max)`.
    Logistic { max: T, steepness: T, threshold: T },
    /// `min(max(slope · s, lo), hi)`.
    Clamp { slope: T, lo: T, hi: T },
    /// `slope · s + offset`.
    Linear { slope: T, offset: T },
    /// `max(0, s)`.
    Relu,
}

/// One end of the attained range of an activation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RangeEnd<T> {
    /// Value reached at some finite argument.
    Attained(T),
    /// Value approached asymptotically but never reached.
    Asymptote(T),
    Unbounded,
}

impl<T: Real> Activation<T> {
    pub fn logistic(max: T, steepness: T, threshold: T) -> Self {
        Activation::Logistic { max, steepness, threshold }
    }

    pub fn clamp(slope: T, lo: T, hi: T) -> Self {
        Activation::Clamp { slope, lo, hi }
    }

    pub fn linear(slope: T, offset: T) -> Self {
        Activation::Linear { slope, offset }
    }

    /// `logistic(1, 1, 0)`.
    pub fn standard_logistic() -> Self {
        Self::logistic(T::one(), T::one(), T::zero())
    }

    pub fn identity() -> Self {
        Self::linear(T::one(), T::zero())
    }

    pub fn validate(&self) -> Result<(), ActivationError> {
        let params: &[T] = match self {
            Activation::Logistic { max, steepness, threshold } => &[*max, *steepness, *threshold],
            Activation::Clamp { slope, lo, hi } => &[*slope, *lo, *hi],
            Activation::Linear { slope, offset } => &[*slope, *offset],
            Activation::Relu => &[],
        };
        if params.iter().any(|p| !p.is_finite()) {
            return Err(ActivationError::NonFinite);
        }
        match *self {
            Activation::Logistic { max, steepness, .. } if !(max > T::zero() && steepness > T::zero()) => {
                Err(ActivationError::Logistic {
                    max: max.as_f64(),
                    steepness: steepness.as_f64(),
                })
            }
            Activation::Clamp { slope, lo, hi } if slope < T::zero() || lo > hi => Err(ActivationError::Clamp {
                slope: slope.as_f64(),
                lo: lo.as_f64(),
                hi: hi.as_f64(),
            }),
            Activation::Linear { slope, .. } if slope < T::zero() => Err(ActivationError::Linear(slope.as_f64())),
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn eval(&self, s: T) -> T {
        match *self {
            Activation::Logistic { max, steepness, threshold } => {
                max / (T::one() + (-steepness * (s - threshold)).exp())
            }
            Activation::Clamp { slope, lo, hi } => (slope * s).max(lo).min(hi),
            Activation::Linear { slope, offset } => slope * s + offset,
            Activation::Relu => s.max(T::zero()),
        }
    }

    /// Right derivative; used as the Newton slope.
    pub fn derivative(&self, s: T) -> T {
        match *self {
            Activation::Logistic { max, steepness, threshold } => {
                let e = (-steepness * (s - threshold).abs()).exp();
                if !e.is_finite() {
                    return T::zero();
                }
                max * steepness * e / ((T::one() + e) * (T::one() + e))
            }
            Activation::Clamp { slope, lo, hi } => {
                let v = slope * s;
                if v >= lo && v < hi {
                    slope
                } else {
                    T::zero()
                }
            }
            Activation::Linear { slope, .. } => slope,
            Activation::Relu => {
                if s >= T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    /// Global Lipschitz constant.
    pub fn lipschitz(&self) -> T {
        match *self {
            Activation::Logistic { max, steepness, .. } => max * steepness / T::lit(4.0),
            Activation::Clamp { slope, lo, hi } => {
                if lo == hi {
                    T::zero()
                } else {
                    slope
                }
            }
            Activation::Linear { slope, .. } => slope,
            Activation::Relu => T::one(),
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.bound().is_some()
    }

    /// `M` with `|S(s)| ≤ M` for every `s`, when one exists.
    pub fn bound(&self) -> Option<T> {
        match *self {
            Activation::Logistic { max, .. } => Some(max),
            Activation::Clamp { lo, hi, .. } => Some(lo.abs().max(hi.abs())),
            Activation::Linear { slope, offset } if slope == T::zero() => Some(offset.abs()),
            Activation::Linear { .. } | Activation::Relu => None,
        }
    }

    /// Every catalog member is non-decreasing.
    pub fn is_nondecreasing(&self) -> bool {
        true
    }

    /// Infimum and supremum of the image of `S`.
    pub fn range(&self) -> (RangeEnd<T>, RangeEnd<T>) {
        match *self {
            Activation::Logistic { max, .. } => (RangeEnd::Asymptote(T::zero()), RangeEnd::Asymptote(max)),
            Activation::Clamp { slope, lo, hi } => {
                if slope == T::zero() {
                    let c = T::zero().max(lo).min(hi);
                    (RangeEnd::Attained(c), RangeEnd::Attained(c))
                } else {
                    (RangeEnd::Attained(lo), RangeEnd::Attained(hi))
                }
            }
            Activation::Linear { slope, offset } => {
                if slope == T::zero() {
                    (RangeEnd::Attained(offset), RangeEnd::Attained(offset))
                } else {
                    (RangeEnd::Unbounded, RangeEnd::Unbounded)
                }
            }
            Activation::Relu => (RangeEnd::Attained(T::zero()), RangeEnd::Unbounded),
        }
    }

    /// Whether `y` is a value of `S`.
    pub fn attains(&self, y: T) -> bool {
        if !y.is_finite() {
            return false;
        }
        let above = match self.range().0 {
            RangeEnd::Attained(lo) => y >= lo,
            RangeEnd::Asymptote(lo) => y > lo,
            RangeEnd::Unbounded => true,
        };
        let below = match self.range().1 {
            RangeEnd::Attained(hi) => y <= hi,
            RangeEnd::Asymptote(hi) => y < hi,
            RangeEnd::Unbounded => true,
        };
        above && below
    }

    /// A point of the preimage `S⁻¹(y)`: the midpoint of the preimage
    /// interval when it is bounded, its finite endpoint when it is a
    /// half-line, and `0` when `S ≡ y`. `None` if `y` is not attained.
    pub fn preimage(&self, y: T) -> Option<T> {
        if !self.attains(y) {
            return None;
        }
        let (lower, upper) = roots::monotone_preimage(|s| self.eval(s), y);
        Some(match (lower, upper) {
            (Some(a), Some(b)) => a + (b - a) * T::lit(0.5),
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => T::zero(),
        })
    }
}
