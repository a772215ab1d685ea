//! Imaging inverse problems at desk scale.
//!
//! * [`operators`]: forward measurement models with matched adjoints.
//! * [`regularizers`]: penalties and their proximal maps.
//! * [`solvers`]: ML/MAP solvers, plug-and-play ADMM and RED.
//! * [`learned`]: supervised, self-supervised, generative and untrained-prior
//!   reconstruction built on `invkit-neuralkit`.
//! * [`bench`]: phantoms, metrics and the scenario/robustness harness.

pub mod bench;
mod error;
mod image;
pub mod learned;
pub mod linalg;
pub mod noise;
pub mod operators;
pub mod regularizers;
pub mod rng;
pub mod solvers;

pub use error::{InvError, Result};
pub use image::{Image, MeasurementVector};
pub use noise::{add_noise, NoiseModel};
pub use operators::{make_operator, ForwardOperator, OperatorSpec};
pub use regularizers::Regularizer;
