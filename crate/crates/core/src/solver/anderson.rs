//! Damped fixed-point iteration with optional Anderson mixing.

use crate::linalg::{DenseMatrix, PivotedQr};
use crate::scalar::Real;

use super::{IterationRecord, SolverOptions};

// Columns of the mixing least-squares problem whose R diagonal falls below
// this fraction of the leading one are dropped.
const MIXING_RANK_TOL: f64 = 1e-10;
// History is discarded once the residual exceeds this multiple of the best
// residual seen since the last restart.
const RESTART_GROWTH: f64 = 10.0;

pub(crate) struct Outcome<T> {
    pub x: Vec<T>,
    pub residual: T,
    pub iterations: usize,
    pub converged: bool,
    pub log: Vec<IterationRecord<T>>,
}

/// Weighted Euclidean norm `sqrt(Σ w_i v_i²)`.
pub(crate) fn weighted_norm<T: Real>(w: &[T], v: &[T]) -> T {
    let mut acc = T::zero();
    for (&wi, &vi) in w.iter().zip(v) {
        acc += wi * vi * vi;
    }
    acc.sqrt()
}

struct Mixer<T> {
    depth: usize,
    damping: T,
    sqrt_w: Vec<T>,
    // previous (x, F) pairs, oldest first
    xs: Vec<Vec<T>>,
    fs: Vec<Vec<T>>,
    best_since_restart: T,
}

impl<T: Real> Mixer<T> {
    fn new(depth: usize, damping: T, weights: &[T]) -> Self {
        Self {
            depth,
            damping,
            sqrt_w: weights.iter().map(|w| w.sqrt()).collect(),
            xs: Vec::new(),
            fs: Vec::new(),
            best_since_restart: T::infinity(),
        }
    }

    fn reset(&mut self) {
        self.xs.clear();
        self.fs.clear();
        self.best_since_restart = T::infinity();
    }

    fn damped(&self, x: &[T], f: &[T]) -> Vec<T> {
        x.iter().zip(f).map(|(&xi, &fi)| xi + self.damping * fi).collect()
    }

    /// Next iterate from the current point `x` and its residual `f = π(x) − x`.
    fn next(&mut self, x: &[T], f: &[T], f_norm: T) -> Vec<T> {
        if self.depth == 0 {
            return self.damped(x, f);
        }
        if f_norm > T::lit(RESTART_GROWTH) * self.best_since_restart {
            self.reset();
        }
        self.best_since_restart = self.best_since_restart.min(f_norm);

        self.xs.push(x.to_vec());
        self.fs.push(f.to_vec());
        if self.xs.len() > self.depth + 1 {
            self.xs.remove(0);
            self.fs.remove(0);
        }
        let m = self.xs.len() - 1;
        if m == 0 {
            return self.damped(x, f);
        }

        let len = x.len();
        let dx: Vec<Vec<T>> = (0..m)
            .map(|j| self.xs[j + 1].iter().zip(&self.xs[j]).map(|(&a, &b)| a - b).collect())
            .collect();
        let df: Vec<Vec<T>> = (0..m)
            .map(|j| self.fs[j + 1].iter().zip(&self.fs[j]).map(|(&a, &b)| a - b).collect())
            .collect();
        let a = DenseMatrix::from_fn(len, m, |i, j| self.sqrt_w[i] * df[j][i]);
        let rhs: Vec<T> = f.iter().zip(&self.sqrt_w).map(|(&fi, &s)| s * fi).collect();
        let qr = PivotedQr::factor(&a);
        let rank = qr.rank(T::lit(MIXING_RANK_TOL));
        if rank == 0 {
            self.reset();
            return self.damped(x, f);
        }
        let gamma = qr.solve(&rhs, rank);

        let mut next = self.damped(x, f);
        for (j, &g) in gamma.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            for i in 0..len {
                next[i] -= g * (dx[j][i] + self.damping * df[j][i]);
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            self.reset();
            return self.damped(x, f);
        }
        next
    }
}

/// Iterates `x ← mix(x, π(x))` until the residual reported by `eval` drops
/// below `opts.tol`. `eval` returns `π(x)` and the residual to test at `x`.
/// On exhaustion the iterate with the smallest residual is returned.
pub(crate) fn iterate<T: Real, E>(
    x0: Vec<T>,
    weights: &[T],
    opts: &SolverOptions<T>,
    mut eval: impl FnMut(&[T]) -> Result<(Vec<T>, T), E>,
) -> Result<Outcome<T>, E> {
    let mut mixer = Mixer::new(opts.anderson_depth, opts.damping, weights);
    let mut x = x0;
    let mut best: Option<(Vec<T>, T)> = None;
    let mut log = Vec::new();

    for k in 0..opts.max_iterations {
        let (p, residual) = eval(&x)?;
        let finite = residual.is_finite() && p.iter().all(|v| v.is_finite());
        if !finite {
            log.push(IterationRecord {
                iteration: k,
                residual,
                step: T::nan(),
            });
            return Ok(finish(best, x, residual, k + 1, false, log));
        }
        if best.as_ref().is_none_or(|(_, r)| residual < *r) {
            best = Some((x.clone(), residual));
        }
        if residual <= opts.tol {
            log.push(IterationRecord {
                iteration: k,
                residual,
                step: T::zero(),
            });
            return Ok(Outcome {
                x,
                residual,
                iterations: k + 1,
                converged: true,
                log,
            });
        }
        let f: Vec<T> = p.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let f_norm = weighted_norm(weights, &f);
        let next = mixer.next(&x, &f, f_norm);
        let step: Vec<T> = next.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        log.push(IterationRecord {
            iteration: k,
            residual,
            step: weighted_norm(weights, &step),
        });
        x = next;
    }
    Ok(finish(best, x, T::nan(), opts.max_iterations, false, log))
}

fn finish<T: Real>(
    best: Option<(Vec<T>, T)>,
    last: Vec<T>,
    last_residual: T,
    iterations: usize,
    converged: bool,
    log: Vec<IterationRecord<T>>,
) -> Outcome<T> {
    let (x, residual) = best.unwrap_or((last, last_residual));
    Outcome {
        x,
        residual,
        iterations,
        converged,
        log,
    }
}
