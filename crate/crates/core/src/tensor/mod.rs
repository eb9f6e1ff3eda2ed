//! Reverse-mode differentiation engine, neural layers and optimisers.
//!
//! Everything is `f64`. A training step binds a [`ParamStore`] to a fresh
//! [`Tape`], runs the forward pass, calls [`Tape::backward`], accumulates the
//! gradients into the store and lets an [`OptimizerState`] update it.

pub mod checkpoint;
pub mod gumbel;
pub mod nn;
pub mod optim;
pub mod params;
pub mod tape;
pub mod value;

pub use checkpoint::Checkpoint;
pub use gumbel::gumbel_softmax;
pub use optim::{AdamConfig, OptimizerState, Variant};
pub use params::{Bound, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use value::Tensor;
