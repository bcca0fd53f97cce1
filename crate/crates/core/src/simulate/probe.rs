use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{simulate, Method, SimError, SimulationConfig};
use crate::grid::{Field, FieldPair};
use crate::model::NeuralFieldModel;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOptions<T> {
    /// Pair norm of the initial perturbation.
    pub scale: T,
    pub t_end: T,
    pub dt: T,
    pub method: Method,
    pub stride: usize,
    pub seed: u64,
    /// Integrator state at the equilibrium (PI control).
    pub integrator: Option<Field<T>>,
}

impl<T: Real> ProbeOptions<T> {
    pub fn new(scale: T, t_end: T, dt: T) -> Self {
        Self {
            scale,
            t_end,
            dt,
            method: Method::Euler,
            stride: 1,
            seed: 0,
            integrator: None,
        }
    }
}

/// Outcome of a perturbation experiment around a candidate equilibrium.
/// Empirical and non-certifying: decay observed on one trajectory says
/// nothing definitive about stability.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport<T> {
    pub times: Vec<T>,
    /// `‖z(t) − z*‖` per sample.
    pub distance: Vec<T>,
    pub initial: T,
    pub terminal: T,
    /// Samples after this time are compared against `initial`.
    pub burn_in: T,
    /// Every post-burn-in distance is at most the initial one.
    pub bounded_after_burn_in: bool,
    /// Terminal distance at most `1e-3` of the initial one (plus `1e-9`).
    pub converged: bool,
    pub final_state: FieldPair<T>,
}

impl<T> ProbeReport<T> {
    pub fn label(&self) -> &'static str {
        "empirical, non-certifying"
    }
}

/// Simulates from `z* + δ` with `δ` a seeded random pair of norm `scale`
/// and tracks the distance back to `z*`. The burn-in is the largest time
/// constant.
pub fn probe_convergence<T: Real>(
    model: &NeuralFieldModel<T>,
    z_star: &FieldPair<T>,
    opts: &ProbeOptions<T>,
) -> Result<ProbeReport<T>, SimError<T>> {
    let domain = z_star.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let raw: Vec<T> = (0..2 * domain.len()).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect();
    let dir = FieldPair::from_stacked(domain, &raw).expect("stacked length");
    let len = dir.pair_norm();
    let delta = if opts.scale == T::zero() || len == T::zero() {
        FieldPair::zeros(domain)
    } else {
        dir.scale(opts.scale / len)
    };
    let start = z_star.add(&delta).expect("same domain");

    let mut cfg = SimulationConfig::new(start, opts.t_end, opts.dt)
        .method(opts.method)
        .stride(opts.stride)
        .reference(z_star.clone());
    cfg.integrator = opts.integrator.clone();
    let run = simulate(model, &cfg)?;

    let distance = run.distance_to_reference.clone().expect("reference supplied");
    let initial = distance[0];
    let terminal = *distance.last().expect("non-empty");
    let burn_in = model.tau_max();
    let bounded_after_burn_in = run
        .times
        .iter()
        .zip(&distance)
        .filter(|(t, _)| **t >= burn_in)
        .all(|(_, d)| *d <= initial);
    Ok(ProbeReport {
        converged: terminal <= T::lit(1e-3) * initial + T::lit(1e-9),
        final_state: run.final_state().clone(),
        times: run.times,
        distance,
        initial,
        terminal,
        burn_in,
        bounded_after_burn_in,
    })
}
