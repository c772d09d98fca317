//! Dense networks with exact reverse-mode gradients, Adam, and a central
//! finite-difference oracle.
//!
//! Everything is `f64`. A network is a chain of [`Dense`] layers with one
//! hidden activation and one output activation.
//!
//! Parameter snapshots serialise to JSON as
//! `{"layers": [{"in_dim", "out_dim", "weight": [row-major out x in], "bias"}],
//! "hidden_activation": "tanh", "output_activation": "identity"}`.

mod adam;
mod fd;
mod mlp;

pub use adam::{adam_step, adam_step_flat, AdamConfig, AdamState};
pub use fd::{finite_difference_flat, finite_difference_gradient, max_relative_error};
pub use mlp::{Activation, Dense, ForwardCache, MlpParams, ParamGrads};
