//! Closed-loop equilibria.
//!
//! Equilibria are computed as fixed points of `π(x) = H⁻¹(W(ρ(x)) + f)` by
//! damped Picard iteration with optional Anderson mixing; `z* = ρ(x*)` is
//! then a fixed point of the stationarity map `T`. Boundedness of both
//! activations guarantees a fixed point exists but not that the iteration
//! finds it, so non-convergence is reported rather than raised. Delays never
//! enter any equilibrium computation.

mod anderson;
mod contraction;
mod linear;
mod pi;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grid::FieldPair;
use crate::model::{ModelError, NeuralFieldModel};
use crate::scalar::Real;

pub use contraction::{estimate_contraction, ContractionEstimate};
pub use linear::{linear_system, solve_linear_case, LinearReport};
pub use pi::{solve_pi_equilibrium, PiEquilibriumResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("z_ref is outside the range of S1 at {} node(s), first: {:?}", nodes.len(), &nodes[..nodes.len().min(8)])]
    ReferenceUnreachable { nodes: Vec<usize> },
    #[error("k_I alpha vanishes at node {node} where the integrator equation needs a nonzero value")]
    DivisionDegenerate { node: usize },
    #[error("no convergence after {iterations} iterations (best residual {residual})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("operation requires {0}")]
    Unsupported(&'static str),
}

/// Iteration controls. Defaults: 10 000 iterations, residual tolerance
/// `1e-10`, damping `0.5`, Anderson depth 5, inner tolerance `tol / 100`,
/// one start, seed 0, no contraction sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions<T> {
    pub max_iterations: usize,
    /// Residual tolerance on `‖𝒯(x) − x‖` (pair norm).
    pub tol: T,
    /// Damping `θ ∈ (0, 1]` in `x ← (1 − θ) x + θ π(x)`.
    pub damping: T,
    /// Anderson history length; 0 gives plain damped iteration.
    pub anderson_depth: usize,
    /// Residual tolerance for the nodewise `H⁻¹` solves; `None` means `tol / 100`.
    pub inner_tol: Option<T>,
    pub multistart: usize,
    pub seed: u64,
    /// Pairs sampled by [`estimate_contraction`] after a solve; 0 skips it.
    pub contraction_samples: usize,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            tol: T::lit(1e-10),
            damping: T::lit(0.5),
            anderson_depth: 5,
            inner_tol: None,
            multistart: 1,
            seed: 0,
            contraction_samples: 0,
        }
    }
}

impl<T: Real> SolverOptions<T> {
    pub fn inner_tolerance(&self) -> T {
        self.inner_tol.unwrap_or(self.tol / T::lit(100.0))
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.tol > T::zero()) {
            return Err(SolveError::InvalidOptions("tol must be > 0".into()));
        }
        if !(self.damping > T::zero() && self.damping <= T::one()) {
            return Err(SolveError::InvalidOptions("damping must lie in (0, 1]".into()));
        }
        if !(self.inner_tolerance() > T::zero()) {
            return Err(SolveError::InvalidOptions("inner_tol must be > 0".into()));
        }
        if self.max_iterations == 0 || self.multistart == 0 {
            return Err(SolveError::InvalidOptions(
                "max_iterations and multistart must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// One row of the iteration log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord<T> {
    pub iteration: usize,
    /// `‖𝒯(x_k) − x_k‖`.
    pub residual: T,
    /// `‖x_{k+1} − x_k‖`; zero on the converged iterate.
    pub step: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverWarning {
    /// An activation is unbounded, so no equilibrium is guaranteed.
    ExistenceNotGuaranteed,
    /// Converged point violates the a-priori norm bound.
    OutsideAPrioriBound,
}

impl fmt::Display for SolverWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverWarning::ExistenceNotGuaranteed => f.write_str("existence_not_guaranteed"),
            SolverWarning::OutsideAPrioriBound => f.write_str("outside_a_priori_bound"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult<T> {
    pub x_star: FieldPair<T>,
    /// `ρ(x_star)`.
    pub z_star: FieldPair<T>,
    pub residual_tcal: T,
    pub residual_t: T,
    /// `π` evaluations used by the selected start.
    pub iterations: usize,
    pub converged: bool,
    /// Index of the start that produced the result.
    pub start: usize,
    pub a_priori_bound: Option<T>,
    pub within_bound: Option<bool>,
    pub contraction: Option<ContractionEstimate<T>>,
    pub warnings: Vec<SolverWarning>,
    pub log: Vec<IterationRecord<T>>,
}

/// `‖T(z) − z‖` together with the largest nodewise deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport<T> {
    pub pair_norm: T,
    pub max_abs: T,
}

pub fn verify_equilibrium<T: Real>(model: &NeuralFieldModel<T>, z: &FieldPair<T>) -> ResidualReport<T> {
    let diff = model.apply_t(z).sub(z).expect("same domain");
    ResidualReport {
        pair_norm: diff.pair_norm(),
        max_abs: diff.sup_norm(),
    }
}

/// Evaluates `π(x)` and `‖𝒯(x) − x‖` together; the latter equals
/// `‖W(ρ(x)) + f − H(x)‖` and reuses the same target.
fn pi_and_residual<T: Real>(
    model: &NeuralFieldModel<T>,
    x: &FieldPair<T>,
    inner_tol: T,
) -> Result<(FieldPair<T>, T), ModelError> {
    let target = model.pi_target(x);
    let residual = target.sub(&model.apply_h(x))?.pair_norm();
    let pi = model.invert_h(&target, inner_tol)?;
    Ok((pi, residual))
}

fn start_point<T: Real>(model: &NeuralFieldModel<T>, opts: &SolverOptions<T>, index: usize) -> Vec<T> {
    let f = model.forcing().stacked();
    if index == 0 {
        return f;
    }
    let spread = T::one() + f.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(index as u64));
    f.into_iter()
        .map(|v| v + spread * T::lit(rng.random_range(-1.0..1.0)))
        .collect()
}

/// Damped (optionally Anderson-accelerated) iteration on `π` starting from
/// `x₀ = f`, plus `multistart − 1` seeded perturbed starts. The first
/// converged start wins; otherwise the start with the smallest residual is
/// returned with `converged = false`.
pub fn solve_fixed_point<T: Real>(
    model: &NeuralFieldModel<T>,
    opts: &SolverOptions<T>,
) -> Result<EquilibriumResult<T>, SolveError> {
    opts.validate()?;
    if model.controller().has_integrator() {
        return Err(SolveError::Unsupported("a static controller; see solve_pi_equilibrium"));
    }
    let domain = model.domain();
    let weights: Vec<T> = domain.weights().iter().chain(domain.weights()).copied().collect();
    let inner = opts.inner_tolerance();

    let mut chosen: Option<(usize, anderson::Outcome<T>)> = None;
    for start in 0..opts.multistart {
        let outcome = anderson::iterate(start_point(model, opts, start), &weights, opts, |x| {
            let x = FieldPair::from_stacked(domain, x).expect("stacked length");
            let (pi, residual) = pi_and_residual(model, &x, inner)?;
            Ok::<_, ModelError>((pi.stacked(), residual))
        })?;
        let better = match &chosen {
            None => true,
            Some((_, best)) => !best.converged && (outcome.converged || outcome.residual < best.residual),
        };
        if better {
            chosen = Some((start, outcome));
        }
        if chosen.as_ref().is_some_and(|(_, o)| o.converged) {
            break;
        }
    }
    let (start, outcome) = chosen.expect("at least one start");

    let x_star = FieldPair::from_stacked(domain, &outcome.x).expect("stacked length");
    let z_star = model.apply_rho(&x_star);
    let residual_t = verify_equilibrium(model, &z_star).pair_norm;

    let mut warnings = Vec::new();
    if model.existence_not_guaranteed() {
        warnings.push(SolverWarning::ExistenceNotGuaranteed);
    }
    let bound = model.a_priori_bound();
    let within_bound = bound.map(|r| x_star.pair_norm() <= r * (T::one() + T::lit(1e-6)));
    if outcome.converged && within_bound == Some(false) {
        warnings.push(SolverWarning::OutsideAPrioriBound);
    }
    let contraction = if opts.contraction_samples > 0 {
        Some(estimate_contraction(model, opts, opts.contraction_samples, Some(&x_star))?)
    } else {
        None
    };

    Ok(EquilibriumResult {
        x_star,
        z_star,
        residual_tcal: outcome.residual,
        residual_t,
        iterations: outcome.iterations,
        converged: outcome.converged,
        start,
        a_priori_bound: bound,
        within_bound,
        contraction,
        warnings,
        log: outcome.log,
    })
}
