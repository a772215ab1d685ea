//! Learned reconstruction: supervised residual and unrolled networks,
//! SURE/GSURE and Noise2Noise training, generative-prior recovery in a latent
//! space, and untrained decoder priors.

mod dip;
mod generative;
mod models;
mod risk;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{InvError, Result};
use crate::image::MeasurementVector;
use crate::linalg;
use crate::operators::{ForwardOperator, OperatorSpec};

pub use dip::{dip_reconstruct, DipConfig, DipResult, PLATEAU_TOL, PLATEAU_WINDOW};
pub(crate) use generative::median;
pub use generative::{
    csgm_measurement_sweep, csgm_recover, train_generator, CsgmConfig, CsgmResult, Generator, GeneratorConfig, LatentOptimizer,
    Provenance, SweepRow, SweepTable,
};
pub use models::{residual_body, residual_reconstruct, unrolled_forward, Reconstructor, ResidualModel, UnrolledModel};
pub use risk::{divergence, gsure_loss, sure_loss, DivergenceMode, GsureEstimate, Pseudoinverse, GSURE_OMITTED_TERM};
pub use train::{
    noise2noise_targets, train_noise2noise, train_self_supervised, train_supervised, SelfSupervisedLoss, TrainConfig, TrainReport,
    TrainingPair,
};

/// Which data a learned method trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingRegime {
    PairedXy,
    XOnly,
    YOnlySure,
    YOnlyGsure,
    #[serde(rename = "noise2noise")]
    Noise2Noise,
    /// No training data at all: classical solvers and untrained priors.
    Untrained,
}

impl TrainingRegime {
    pub const ALL: [TrainingRegime; 6] = [
        TrainingRegime::PairedXy,
        TrainingRegime::XOnly,
        TrainingRegime::YOnlySure,
        TrainingRegime::YOnlyGsure,
        TrainingRegime::Noise2Noise,
        TrainingRegime::Untrained,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrainingRegime::PairedXy => "paired_xy",
            TrainingRegime::XOnly => "x_only",
            TrainingRegime::YOnlySure => "y_only_sure",
            TrainingRegime::YOnlyGsure => "y_only_gsure",
            TrainingRegime::Noise2Noise => "noise2noise",
            TrainingRegime::Untrained => "untrained",
        }
    }

    /// Whether measurement-only training needs the noise level.
    pub fn needs_sigma(self) -> bool {
        matches!(self, TrainingRegime::YOnlySure | TrainingRegime::YOnlyGsure)
    }
}

/// Linear map from measurements back to image space, used as the input stage
/// of residual networks and as a baseline reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ApproxInverse {
    Adjoint,
    /// `(AᵀA + λI)⁻¹Aᵀ` by conjugate gradients to a tight tolerance.
    Pseudoinverse { lambda: f64 },
    /// Requires `m = n`; passes measurements through unchanged.
    Identity,
}

/// CG settings for [`ApproxInverse::Pseudoinverse`].
const PINV_TOL: f64 = 1e-12;
const PINV_MAX_ITERS: usize = 2000;
/// Regularization of the default pseudoinverse for deblurring and inpainting.
pub const DEFAULT_PINV_LAMBDA: f64 = 1e-2;

impl ApproxInverse {
    /// Adjoint for compressive, MRI and Radon (a matched back-projection
    /// stands in for filtered back-projection); regularized pseudoinverse for
    /// deblurring, superresolution and inpainting; adjoint (= identity) for
    /// denoising.
    pub fn default_for(spec: &OperatorSpec) -> Result<Self> {
        match spec {
            OperatorSpec::Identity { .. } | OperatorSpec::Compressive { .. } | OperatorSpec::Mri { .. } | OperatorSpec::Radon { .. } => {
                Ok(ApproxInverse::Adjoint)
            }
            OperatorSpec::Convolution { .. } | OperatorSpec::Subsample { .. } | OperatorSpec::Superresolution { .. } => {
                Ok(ApproxInverse::Pseudoinverse { lambda: DEFAULT_PINV_LAMBDA })
            }
            OperatorSpec::PhaseRetrieval { .. } => Err(InvError::Unsupported("no linear approximate inverse for phase_retrieval".into())),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["adjoint"] => Ok(ApproxInverse::Adjoint),
            ["identity"] => Ok(ApproxInverse::Identity),
            ["pinv"] => Ok(ApproxInverse::Pseudoinverse { lambda: DEFAULT_PINV_LAMBDA }),
            ["pinv", l] => {
                let lambda: f64 = l.parse().map_err(|_| InvError::InvalidSpec(format!("bad pinv lambda `{l}`")))?;
                if !(lambda >= 0.0) || !lambda.is_finite() {
                    return Err(InvError::InvalidSpec(format!("pinv lambda must be >= 0, got {lambda}")));
                }
                Ok(ApproxInverse::Pseudoinverse { lambda })
            }
            _ => Err(InvError::InvalidSpec(format!("unknown approximate inverse `{s}` (adjoint, identity, pinv[:lambda])"))),
        }
    }

    pub fn apply_vec(&self, op: &ForwardOperator, y: &[f64]) -> Result<Vec<f64>> {
        if !op.is_linear() {
            return Err(InvError::Unsupported(format!("approximate inverse of nonlinear {}", op.name())));
        }
        if y.len() != op.output_len() {
            return Err(InvError::DimensionMismatch { expected: op.output_len(), got: y.len() });
        }
        match *self {
            ApproxInverse::Adjoint => op.transpose(y),
            ApproxInverse::Identity => {
                if op.output_len() != op.input_len() {
                    return Err(InvError::InvalidSpec(format!("identity inverse needs m = n for {}", op.name())));
                }
                Ok(y.to_vec())
            }
            ApproxInverse::Pseudoinverse { lambda } => {
                let b = op.transpose(y)?;
                let apply = |v: &[f64]| {
                    let mut out = op.transpose(&op.forward(v).expect("dims checked")).expect("dims checked");
                    linalg::axpy(lambda, v, &mut out);
                    out
                };
                Ok(linalg::conjugate_gradient(apply, &b, PINV_TOL, PINV_MAX_ITERS).0)
            }
        }
    }

    pub fn apply(&self, op: &ForwardOperator, y: &MeasurementVector) -> Result<crate::Image> {
        let (h, w) = op.input_dims();
        crate::Image::new(h, w, self.apply_vec(op, &y.data)?)
    }
}
