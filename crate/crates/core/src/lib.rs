//! Evolving per-neuron parameters inside networks whose synaptic weights
//! stay frozen at their random initialization.
//!
//! Each neuron is a small recurrent unit (or, in the ablation, a scale and a
//! bias). A flat genome holds every unit's parameters; GA followed by CMA-ES
//! searches over it on the cart-pole swing-up task.

pub mod checkpoint;
pub mod config;
pub mod env;
pub mod error;
pub mod experiment;
pub mod genome;
pub mod harness;
pub mod network;
pub mod neural_unit;
pub mod optim;
pub mod seeds;

pub use error::{Error, Result};
