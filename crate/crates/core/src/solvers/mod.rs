//! Model-based reconstruction: least squares, proximal gradient, ADMM and its
//! plug-and-play variant, regularization by denoising, and phase retrieval by
//! gradient descent. Every solver starts from `x⁰ = 0` unless stated otherwise
//! and leaves its inputs untouched.

mod classical;
mod phase;

use crate::error::{check_finite, InvError, Result};
use crate::image::{Image, MeasurementVector};
use crate::linalg;
use crate::operators::ForwardOperator;
use crate::regularizers::Regularizer;
use crate::rng;

pub use classical::{admm, ml_least_squares, pnp_admm, prox_gradient, red_solve};
pub use phase::phase_retrieval_gd;

/// Power iterations used to estimate `‖A‖²`.
pub const POWER_ITERS: usize = 50;
/// Default step as a fraction of `1/‖A‖²`.
pub const DEFAULT_STEP_FRACTION: f64 = 0.9;
/// Consecutive small relative objective changes required for convergence.
pub const CONVERGENCE_WINDOW: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    /// `None` selects `0.9/‖A‖²` (solver specific for RED and phase retrieval).
    pub step_size: Option<f64>,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self { step_size: None, max_iters: 200, tol: 1e-6, seed: 0 }
    }
}

impl SolveConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(InvError::InvalidSpec("max_iters must be >= 1".into()));
        }
        if let Some(eta) = self.step_size {
            if !(eta > 0.0) || !eta.is_finite() {
                return Err(InvError::InvalidSpec(format!("step size must be > 0, got {eta}")));
            }
        }
        if !(self.tol >= 0.0) {
            return Err(InvError::InvalidSpec("tol must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestartOutcome {
    pub initial_objective: f64,
    pub final_objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub reconstruction: Image,
    pub objective_trace: Vec<f64>,
    /// ADMM-type solvers: `‖x − v‖` per iteration. Empty otherwise.
    pub residual_trace: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    /// Per-restart objectives for multi-start solvers.
    pub restarts: Vec<RestartOutcome>,
    /// Conventions and assumptions that apply to this run.
    pub notes: Vec<String>,
}

/// Image-to-image map used in place of a proximal step.
pub trait Denoiser: Sync {
    fn denoise(&self, x: &Image) -> Result<Image>;
}

impl<F> Denoiser for F
where
    F: Fn(&Image) -> Image + Sync,
{
    fn denoise(&self, x: &Image) -> Result<Image> {
        Ok(self(x))
    }
}

/// Proximal map of a regularizer at a fixed step, viewed as a denoiser.
#[derive(Debug, Clone, Copy)]
pub struct ProxDenoiser {
    pub reg: Regularizer,
    pub step: f64,
}

impl Denoiser for ProxDenoiser {
    fn denoise(&self, x: &Image) -> Result<Image> {
        Ok(self.reg.prox(x, self.step))
    }
}

/// Estimates `‖A‖²` (largest eigenvalue of `AᵀA`) by power iteration from a
/// seeded random start.
pub fn estimate_norm_sq(op: &ForwardOperator, iters: usize, seed: u64) -> Result<f64> {
    let mut v = rng::gaussian_vec(&mut rng::rng(seed), op.input_len());
    let n0 = linalg::norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = op.transpose(&op.forward(&v)?)?;
        lambda = linalg::norm(&w);
        if lambda == 0.0 {
            return Ok(0.0);
        }
        v = linalg::scale(&w, 1.0 / lambda);
    }
    Ok(lambda)
}

pub(crate) fn require_linear(op: &ForwardOperator) -> Result<()> {
    if !op.is_linear() {
        return Err(InvError::Unsupported(format!("{} is not a linear operator", op.name())));
    }
    Ok(())
}

pub(crate) fn check_inputs(op: &ForwardOperator, y: &MeasurementVector) -> Result<()> {
    if y.len() != op.output_len() {
        return Err(InvError::DimensionMismatch { expected: op.output_len(), got: y.len() });
    }
    check_finite("measurements", &y.data)
}

pub(crate) fn default_step(op: &ForwardOperator, cfg: &SolveConfig) -> Result<f64> {
    match cfg.step_size {
        Some(eta) => Ok(eta),
        None => {
            let l = estimate_norm_sq(op, POWER_ITERS, cfg.seed)?;
            if l <= 0.0 {
                return Err(InvError::InvalidSpec("operator has zero norm".into()));
            }
            Ok(DEFAULT_STEP_FRACTION / l)
        }
    }
}

/// Tracks relative objective change; reports convergence after
/// [`CONVERGENCE_WINDOW`] consecutive changes below `tol`.
#[derive(Debug)]
pub(crate) struct ConvergenceMonitor {
    tol: f64,
    streak: usize,
    last: Option<f64>,
}

impl ConvergenceMonitor {
    pub(crate) fn new(tol: f64) -> Self {
        Self { tol, streak: 0, last: None }
    }

    pub(crate) fn update(&mut self, objective: f64) -> bool {
        if let Some(prev) = self.last {
            let rel = (prev - objective).abs() / prev.abs().max(f64::MIN_POSITIVE);
            if rel < self.tol || (prev == 0.0 && objective == 0.0) {
                self.streak += 1;
            } else {
                self.streak = 0;
            }
        }
        self.last = Some(objective);
        self.streak >= CONVERGENCE_WINDOW
    }
}

pub(crate) fn ensure_finite_iterate(x: &[f64], solver: &str, iteration: usize) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(InvError::Divergence(format!("{solver}: non-finite iterate at iteration {iteration}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{make_operator, Kernel, OperatorSpec};

    #[test]
    fn power_iteration_finds_operator_norm() {
        let id = make_operator(&OperatorSpec::Identity { height: 3, width: 3 }).unwrap();
        assert!((estimate_norm_sq(&id, 50, 1).unwrap() - 1.0).abs() < 1e-12);
        // circular blur with nonnegative normalised kernel has ‖A‖ = 1 (DC gain)
        let blur = make_operator(&OperatorSpec::Convolution { height: 8, width: 8, kernel: Kernel::gaussian(3, 1.0).unwrap() }).unwrap();
        assert!((estimate_norm_sq(&blur, 200, 1).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn monitor_needs_three_small_changes() {
        let mut m = ConvergenceMonitor::new(1e-3);
        assert!(!m.update(1.0));
        assert!(!m.update(1.0));
        assert!(!m.update(1.0));
        assert!(m.update(1.0));
        let mut m = ConvergenceMonitor::new(1e-3);
        for v in [1.0, 0.5, 0.5, 0.4, 0.4, 0.4] {
            assert!(!m.update(v) || v == 0.4);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(SolveConfig { max_iters: 0, ..Default::default() }.validate().is_err());
        assert!(SolveConfig { step_size: Some(-1.0), ..Default::default() }.validate().is_err());
    }
}
