//! Reverse-mode automatic differentiation on a dynamic tape, plus the handful
//! of layers and optimizers needed by the learned reconstruction methods.
//!
//! Values are `f64` throughout. A [`Tape`] records one forward execution;
//! parameters live outside the tape in [`Tensor`]s owned by a [`Network`] (or
//! any other container) and are bound to the tape as leaves for each run.

pub mod checkpoint;
mod error;
pub mod network;
pub mod optim;
pub mod tape;
mod tensor;

pub use error::{NeuralError, Result};
pub use network::{build_decoder, build_denoiser, Bound, DecoderConfig, Layer, LayerSpec, Network};
pub use optim::{Optimizer, OptimizerKind};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
