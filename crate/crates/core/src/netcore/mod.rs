//! Minimal deterministic feedforward engine: dense layers, elementwise
//! activations, exact backpropagation, momentum SGD and checkpoints.

pub mod checkpoint;
mod gradcheck;
mod network;
mod optim;
mod rng;
mod tensor;

pub use gradcheck::{grad_check, max_relative_error, numeric_gradient, relative_error, FD_EPSILON};
pub use network::{Activation, ActivationTrace, Dense, Gradients, Layer, LayerSpec, Network};
pub use optim::{sgd_step, OptimState, SgdConfig};
pub use rng::Rng;
pub use tensor::Tensor;
