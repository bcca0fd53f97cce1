//! Scalar root finding for monotone functions.

use thiserror::Error;

use crate::scalar::Real;

const MAX_ITERATIONS: usize = 200;
// Bisection on doubles reaches adjacent floats from any finite bracket
// in well under this many halvings.
const MAX_BISECTIONS: usize = 4096;
const MAX_EXPANSIONS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError {
    #[error("no sign change on bracket [{lo}, {hi}] (g(lo)={g_lo}, g(hi)={g_hi}); function is not increasing")]
    BracketFailure { lo: f64, hi: f64, g_lo: f64, g_hi: f64 },
    #[error("residual {residual} above tolerance after {iterations} iterations (estimate {estimate})")]
    ToleranceNotMet {
        estimate: f64,
        residual: f64,
        iterations: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarRoot<T> {
    pub root: T,
    pub residual: T,
    pub iterations: usize,
}

/// Solves `g(s) = 0` for a non-decreasing `g` on `[lo, hi]` with Newton
/// steps safeguarded by bisection. `g` returns `(value, slope)`; a step that
/// leaves the current bracket, does not halve the previous step, or meets a
/// non-positive slope falls back to the bracket midpoint. Stops on `|g| ≤ tol`; when the bracket shrinks to
/// adjacent floats the best endpoint is accepted if its residual is within
/// rounding of `scale`.
pub fn safeguarded_newton<T: Real>(
    g: impl Fn(T) -> (T, T),
    mut lo: T,
    mut hi: T,
    tol: T,
    scale: T,
) -> Result<ScalarRoot<T>, RootError> {
    let (mut g_lo, _) = g(lo);
    let (mut g_hi, _) = g(hi);
    if g_lo.abs() <= tol {
        return Ok(ScalarRoot { root: lo, residual: g_lo.abs(), iterations: 0 });
    }
    if g_hi.abs() <= tol {
        return Ok(ScalarRoot { root: hi, residual: g_hi.abs(), iterations: 0 });
    }
    if !(g_lo <= T::zero() && g_hi >= T::zero()) {
        return Err(RootError::BracketFailure {
            lo: lo.as_f64(),
            hi: hi.as_f64(),
            g_lo: g_lo.as_f64(),
            g_hi: g_hi.as_f64(),
        });
    }

    let half = T::lit(0.5);
    let mut s = lo + (hi - lo) * half;
    // Newton is only trusted while its steps keep halving
    let mut prev_step = hi - lo;
    for it in 1..=MAX_ITERATIONS {
        let (gs, slope) = g(s);
        if gs.abs() <= tol {
            return Ok(ScalarRoot { root: s, residual: gs.abs(), iterations: it });
        }
        if gs < T::zero() {
            lo = s;
            g_lo = gs;
        } else {
            hi = s;
            g_hi = gs;
        }
        let newton = if slope > T::zero() { s - gs / slope } else { T::nan() };
        let next = if newton > lo && newton < hi && (newton - s).abs() <= prev_step * half {
            newton
        } else {
            lo + (hi - lo) * half
        };
        prev_step = (next - s).abs();
        if next <= lo || next >= hi {
            // bracket exhausted at floating point resolution
            let (root, residual) = if g_lo.abs() <= g_hi.abs() { (lo, g_lo.abs()) } else { (hi, g_hi.abs()) };
            let slack = T::lit(8.0) * T::epsilon() * (scale.abs() + root.abs());
            if residual <= tol + slack {
                return Ok(ScalarRoot { root, residual, iterations: it });
            }
            return Err(RootError::ToleranceNotMet {
                estimate: root.as_f64(),
                residual: residual.as_f64(),
                iterations: it,
            });
        }
        s = next;
    }
    let (gs, _) = g(s);
    Err(RootError::ToleranceNotMet {
        estimate: s.as_f64(),
        residual: gs.abs().as_f64(),
        iterations: MAX_ITERATIONS,
    })
}

/// Grows `[start - h, start + h]` geometrically until `g` changes sign
/// across it. Returns `None` if no sign change is found.
pub fn expand_bracket<T: Real>(g: impl Fn(T) -> T, start: T) -> Option<(T, T)> {
    let g0 = g(start);
    if g0 == T::zero() {
        return Some((start, start));
    }
    let two = T::lit(2.0);
    let mut step = T::one().max(start.abs() * T::lit(1e-3));
    if g0 > T::zero() {
        let mut hi = start;
        for _ in 0..MAX_EXPANSIONS {
            let lo = start - step;
            if !lo.is_finite() {
                return None;
            }
            if g(lo) <= T::zero() {
                return Some((lo, hi));
            }
            hi = lo;
            step *= two;
        }
    } else {
        let mut lo = start;
        for _ in 0..MAX_EXPANSIONS {
            let hi = start + step;
            if !hi.is_finite() {
                return None;
            }
            if g(hi) >= T::zero() {
                return Some((lo, hi));
            }
            lo = hi;
            step *= two;
        }
    }
    None
}

/// Endpoints of `{s : f(s) = y}` for a non-decreasing `f`, found by bisection:
/// the lower end is `inf {s : f(s) ≥ y}` and the upper end `sup {s : f(s) ≤ y}`.
/// An end is `None` when it is infinite (no finite crossing up to the
/// expansion limit).
pub fn monotone_preimage<T: Real>(f: impl Fn(T) -> T, y: T) -> (Option<T>, Option<T>) {
    let lower = boundary(|s| f(s) >= y, T::zero());
    let upper = boundary(|s| f(s) > y, T::zero());
    (lower, upper)
}

// Finds the switch point of a monotone predicate (false below, true above).
fn boundary<T: Real>(pred: impl Fn(T) -> bool, start: T) -> Option<T> {
    let two = T::lit(2.0);
    let (mut lo, mut hi);
    if pred(start) {
        hi = start;
        let mut step = T::one();
        loop {
            lo = start - step;
            if !pred(lo) {
                break;
            }
            hi = lo;
            step *= two;
            if !lo.is_finite() || step > T::lit(1e300) {
                return None;
            }
        }
    } else {
        lo = start;
        let mut step = T::one();
        loop {
            hi = start + step;
            if pred(hi) {
                break;
            }
            lo = hi;
            step *= two;
            if !hi.is_finite() || step > T::lit(1e300) {
                return None;
            }
        }
    }
    let half = T::lit(0.5);
    for _ in 0..MAX_BISECTIONS {
        let mid = lo + (hi - lo) * half;
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(lo + (hi - lo) * half)
}
