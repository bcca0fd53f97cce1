#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

//! Equilibria and delayed dynamics of two-population neural fields under
//! proportional and proportional-integral feedback.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases at the crate root fix the scalar to `f64`, which is what the
//! command line front end uses.

pub mod activation;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod roots;
pub mod scalar;
pub mod simulate;
pub mod solver;

pub use activation::Activation;
pub use grid::{Axis, Field, FieldPair, GridError, KernelMatrix, QuadratureRule, SpatialDomain};
pub use model::{Controller, DelayMatrix, ModelBuilder, ModelError, NeuralFieldModel};
pub use scalar::Real;

pub type Domain64 = SpatialDomain<f64>;
pub type Field64 = Field<f64>;
pub type FieldPair64 = FieldPair<f64>;
pub type Kernel64 = KernelMatrix<f64>;
pub type Model64 = NeuralFieldModel<f64>;
pub type Activation64 = Activation<f64>;

pub type Domain32 = SpatialDomain<f32>;
pub type Field32 = Field<f32>;
pub type Model32 = NeuralFieldModel<f32>;
