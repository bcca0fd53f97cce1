//! Two-population delayed neural field under feedback control, and the
//! operator chain used to characterise its equilibria.
//!
//! Populations are indexed `0` and `1` throughout (population 1 is the one
//! that is measured and stimulated, population 2 is not). The operators
//! follow the decomposition
//!
//! ```text
//! 𝒯(x) = W(ρ(x)) − σ(x) + f,   H(x) = x + σ(x),   π(x) = H⁻¹(W(ρ(x)) + f)
//! ```
//!
//! with `ρ = (S₁, S₂)` applied nodewise, `σ(x) = (kα S₁(x₁), 0)`,
//! `W` the block Nyström operator built from the four kernels and
//! `f = (I₁* + kα z_ref, I₂*)`. Fixed points of `𝒯` and `π` coincide, and
//! `x ↦ ρ(x)` maps them onto fixed points of the stationarity map `T`.

mod delay;
mod operators;

use std::sync::Arc;

use thiserror::Error;

use crate::activation::{Activation, ActivationError};
use crate::grid::{Field, GridError, KernelMatrix, SpatialDomain, POPULATIONS};
use crate::roots::RootError;
use crate::scalar::Real;

pub use delay::DelayMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("population {population}: {source}")]
    Activation {
        population: usize,
        source: ActivationError,
    },
    #[error("population {population}: time constant must be > 0 (node {node} has {value})")]
    NonPositiveTau { population: usize, node: usize, value: f64 },
    #[error("alpha must be >= 0 (node {node} has {value})")]
    NegativeAlpha { node: usize, value: f64 },
    #[error("controller gains must be finite and >= 0")]
    NegativeGain,
    #[error("delay {population}: entry ({row}, {col}) = {value} outside [0, {max}]")]
    DelayOutOfRange {
        population: usize,
        row: usize,
        col: usize,
        value: f64,
        max: f64,
    },
    #[error("{0} contains non-finite values")]
    NonFinite(&'static str),
    #[error("inverting H at node {node}: {source}")]
    InvertH { node: usize, source: RootError },
}

/// Feedback law acting on population 1 through the input profile `α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Controller<T> {
    OpenLoop,
    /// `u = −k (z₁ − z_ref)`.
    Proportional { gain: T },
    /// `ẏ₁ = z₁ − z_ref`, `u = −k_P (z₁ − z_ref) − k_I y₁`.
    ProportionalIntegral { kp: T, ki: T },
}

impl<T: Real> Controller<T> {
    /// Gain multiplying `α (z₁ − z_ref)` in the static part of the loop.
    pub fn proportional_gain(&self) -> T {
        match *self {
            Controller::OpenLoop => T::zero(),
            Controller::Proportional { gain } => gain,
            Controller::ProportionalIntegral { kp, .. } => kp,
        }
    }

    pub fn integral_gain(&self) -> Option<T> {
        match *self {
            Controller::ProportionalIntegral { ki, .. } => Some(ki),
            _ => None,
        }
    }

    pub fn has_integrator(&self) -> bool {
        matches!(self, Controller::ProportionalIntegral { .. })
    }

    fn validate(&self) -> Result<(), ModelError> {
        let ok = |g: T| g.is_finite() && g >= T::zero();
        let valid = match *self {
            Controller::OpenLoop => true,
            Controller::Proportional { gain } => ok(gain),
            Controller::ProportionalIntegral { kp, ki } => ok(kp) && ok(ki),
        };
        if valid {
            Ok(())
        } else {
            Err(ModelError::NegativeGain)
        }
    }
}

/// Fully assembled closed-loop model on a fixed grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralFieldModel<T> {
    domain: Arc<SpatialDomain<T>>,
    tau: [Field<T>; POPULATIONS],
    input: [Field<T>; POPULATIONS],
    alpha: Field<T>,
    z_ref: Field<T>,
    kernels: [[KernelMatrix<T>; POPULATIONS]; POPULATIONS],
    delays: [DelayMatrix<T>; POPULATIONS],
    max_delay: T,
    activations: [Activation<T>; POPULATIONS],
    controller: Controller<T>,
}

impl<T: Real> NeuralFieldModel<T> {
    pub fn builder(domain: &Arc<SpatialDomain<T>>) -> ModelBuilder<T> {
        ModelBuilder::new(domain)
    }

    pub fn domain(&self) -> &Arc<SpatialDomain<T>> {
        &self.domain
    }

    pub fn tau(&self, population: usize) -> &Field<T> {
        &self.tau[population]
    }

    /// Constant uncontrolled input `I*` of a population.
    pub fn input(&self, population: usize) -> &Field<T> {
        &self.input[population]
    }

    pub fn alpha(&self) -> &Field<T> {
        &self.alpha
    }

    pub fn z_ref(&self) -> &Field<T> {
        &self.z_ref
    }

    /// Kernel `w_ij` (target `i`, source `j`).
    pub fn kernel(&self, target: usize, source: usize) -> &KernelMatrix<T> {
        &self.kernels[target][source]
    }

    /// Delay `d_j` applied to the state of source population `j`.
    pub fn delay(&self, source: usize) -> &DelayMatrix<T> {
        &self.delays[source]
    }

    /// Upper bound `d̄` on all delays.
    pub fn max_delay(&self) -> T {
        self.max_delay
    }

    pub fn activation(&self, population: usize) -> &Activation<T> {
        &self.activations[population]
    }

    pub fn controller(&self) -> &Controller<T> {
        &self.controller
    }

    /// Copy of the model with another feedback law.
    pub fn with_controller(&self, controller: Controller<T>) -> Result<Self, ModelError> {
        controller.validate()?;
        Ok(Self {
            controller,
            ..self.clone()
        })
    }

    /// Copy of the model with other delay matrices.
    pub fn with_delays(&self, delays: [DelayMatrix<T>; POPULATIONS], max_delay: T) -> Result<Self, ModelError> {
        let m = Self {
            delays,
            max_delay,
            ..self.clone()
        };
        m.validate_delays()?;
        Ok(m)
    }

    /// Set when an activation is unbounded: bounded activations are what
    /// guarantees an equilibrium exists, so solvers may legitimately fail.
    pub fn existence_not_guaranteed(&self) -> bool {
        self.activations.iter().any(|a| !a.is_bounded())
    }

    pub fn tau_min(&self) -> T {
        self.tau[0].min_value().min(self.tau[1].min_value())
    }

    pub fn tau_max(&self) -> T {
        self.tau[0].max_value().max(self.tau[1].max_value())
    }

    fn validate(&self) -> Result<(), ModelError> {
        let n = self.domain.len();
        for (p, act) in self.activations.iter().enumerate() {
            act.validate().map_err(|source| ModelError::Activation { population: p, source })?;
        }
        for (p, tau) in self.tau.iter().enumerate() {
            check_domain(&self.domain, tau)?;
            if let Some((node, &v)) = tau.values().iter().enumerate().find(|(_, v)| !(**v > T::zero())) {
                return Err(ModelError::NonPositiveTau {
                    population: p,
                    node,
                    value: v.as_f64(),
                });
            }
            if !tau.is_finite() {
                return Err(ModelError::NonFinite("tau"));
            }
        }
        for input in &self.input {
            check_domain(&self.domain, input)?;
            if !input.is_finite() {
                return Err(ModelError::NonFinite("I_star"));
            }
        }
        check_domain(&self.domain, &self.alpha)?;
        check_domain(&self.domain, &self.z_ref)?;
        if !self.alpha.is_finite() {
            return Err(ModelError::NonFinite("alpha"));
        }
        if let Some((node, &v)) = self.alpha.values().iter().enumerate().find(|(_, v)| **v < T::zero()) {
            return Err(ModelError::NegativeAlpha { node, value: v.as_f64() });
        }
        if !self.z_ref.is_finite() {
            return Err(ModelError::NonFinite("z_ref"));
        }
        for row in &self.kernels {
            for k in row {
                if !k.domain().same_as(&self.domain) || k.dim() != n {
                    return Err(GridError::DomainMismatch.into());
                }
            }
        }
        self.controller.validate()?;
        self.validate_delays()
    }

    fn validate_delays(&self) -> Result<(), ModelError> {
        if !(self.max_delay >= T::zero()) || !self.max_delay.is_finite() {
            return Err(ModelError::NonFinite("max_delay"));
        }
        for (p, d) in self.delays.iter().enumerate() {
            if d.dim() != self.domain.len() {
                return Err(GridError::DomainMismatch.into());
            }
            if let Some((row, col, v)) = d.find_outside(self.max_delay) {
                return Err(ModelError::DelayOutOfRange {
                    population: p,
                    row,
                    col,
                    value: v.as_f64(),
                    max: self.max_delay.as_f64(),
                });
            }
        }
        Ok(())
    }
}

fn check_domain<T: Real>(domain: &Arc<SpatialDomain<T>>, f: &Field<T>) -> Result<(), ModelError> {
    if domain.same_as(f.domain()) {
        Ok(())
    } else {
        Err(GridError::DomainMismatch.into())
    }
}

/// Assembles a [`NeuralFieldModel`]. Defaults: `τ ≡ 1`, `I* ≡ 0`, `α ≡ 1`,
/// `z_ref ≡ 0`, zero kernels and delays, standard logistic activations,
/// open loop.
#[derive(Debug, Clone)]
pub struct ModelBuilder<T> {
    model: NeuralFieldModel<T>,
    explicit_max_delay: Option<T>,
}

impl<T: Real> ModelBuilder<T> {
    pub fn new(domain: &Arc<SpatialDomain<T>>) -> Self {
        let one = Field::constant(domain, T::one());
        let zero = Field::zeros(domain);
        let k0 = KernelMatrix::zero(domain);
        let d0 = DelayMatrix::zero(domain);
        Self {
            model: NeuralFieldModel {
                domain: Arc::clone(domain),
                tau: [one.clone(), one.clone()],
                input: [zero.clone(), zero.clone()],
                alpha: one,
                z_ref: zero,
                kernels: [[k0.clone(), k0.clone()], [k0.clone(), k0]],
                delays: [d0.clone(), d0],
                max_delay: T::zero(),
                activations: [Activation::standard_logistic(); POPULATIONS],
                controller: Controller::OpenLoop,
            },
            explicit_max_delay: None,
        }
    }

    pub fn tau(mut self, population: usize, tau: Field<T>) -> Self {
        self.model.tau[population] = tau;
        self
    }

    pub fn input(mut self, population: usize, input: Field<T>) -> Self {
        self.model.input[population] = input;
        self
    }

    pub fn alpha(mut self, alpha: Field<T>) -> Self {
        self.model.alpha = alpha;
        self
    }

    pub fn z_ref(mut self, z_ref: Field<T>) -> Self {
        self.model.z_ref = z_ref;
        self
    }

    pub fn kernel(mut self, target: usize, source: usize, kernel: KernelMatrix<T>) -> Self {
        self.model.kernels[target][source] = kernel;
        self
    }

    pub fn delay(mut self, source: usize, delay: DelayMatrix<T>) -> Self {
        self.model.delays[source] = delay;
        self
    }

    /// Declared `d̄`; defaults to the largest delay entry.
    pub fn max_delay(mut self, d_bar: T) -> Self {
        self.explicit_max_delay = Some(d_bar);
        self
    }

    pub fn activation(mut self, population: usize, activation: Activation<T>) -> Self {
        self.model.activations[population] = activation;
        self
    }

    pub fn activations(mut self, activation: Activation<T>) -> Self {
        self.model.activations = [activation; POPULATIONS];
        self
    }

    pub fn controller(mut self, controller: Controller<T>) -> Self {
        self.model.controller = controller;
        self
    }

    pub fn build(self) -> Result<NeuralFieldModel<T>, ModelError> {
        let mut model = self.model;
        model.max_delay = match self.explicit_max_delay {
            Some(d) => d,
            None => model.delays[0].max_entry().max(model.delays[1].max_entry()),
        };
        model.validate()?;
        Ok(model)
    }
}
