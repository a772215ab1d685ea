use invkit_neuralkit::{build_decoder, DecoderConfig, Optimizer, OptimizerKind, Tape};

use crate::error::{InvError, Result};
use crate::image::{Image, MeasurementVector};
use crate::linalg;
use crate::operators::ForwardOperator;
use crate::rng;

/// Window (iterations) of the plateau stopping heuristic.
pub const PLATEAU_WINDOW: usize = 50;
/// Relative loss change over one window below which the loss has plateaued.
pub const PLATEAU_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct DipConfig {
    /// `latent_dim` must be `None`: the decoder input is a fixed random tensor.
    pub decoder: DecoderConfig,
    pub iterations: usize,
    /// Store the reconstruction every this many iterations (0 disables).
    pub checkpoint_every: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl DipConfig {
    pub fn new(height: usize, width: usize, iterations: usize, seed: u64) -> Self {
        Self {
            decoder: DecoderConfig::untrained(height, width),
            iterations,
            checkpoint_every: 100,
            optimizer: OptimizerKind::adam(0.01),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DipResult {
    /// Output after all iterations.
    pub final_image: Image,
    /// Output at the first loss plateau (the final output if none occurred).
    pub plateau_image: Image,
    pub plateau_iteration: Option<usize>,
    /// `‖A(G_θ(z)) − y‖²/m` for the weights after `t` updates, `t = 0..=T`.
    pub loss_trace: Vec<f64>,
    pub checkpoints: Vec<(usize, Image)>,
}

impl DipResult {
    /// First iteration whose loss is at most `threshold`.
    pub fn iterations_to_reach(&self, threshold: f64) -> Option<usize> {
        self.loss_trace.iter().position(|&l| l <= threshold)
    }
}

/// Fits the weights of an untrained decoder with a fixed random input to a
/// single measurement, `min_θ ‖A(G_θ(z)) − y‖²`, by Adam. Early stopping is
/// left to the caller through the checkpoints; the plateau iterate is a
/// built-in suggestion.
pub fn dip_reconstruct(op: &ForwardOperator, y: &MeasurementVector, cfg: &DipConfig) -> Result<DipResult> {
    if cfg.iterations == 0 {
        return Err(InvError::InvalidSpec("DIP needs at least one iteration".into()));
    }
    if cfg.decoder.latent_dim.is_some() {
        return Err(InvError::InvalidSpec("DIP decoder takes a fixed tensor input, not a latent vector".into()));
    }
    let (h, w) = op.input_dims();
    if (cfg.decoder.height, cfg.decoder.width) != (h, w) {
        return Err(InvError::InvalidSpec(format!("decoder output {}x{} does not match operator input {h}x{w}", cfg.decoder.height, cfg.decoder.width)));
    }
    if y.len() != op.output_len() {
        return Err(InvError::DimensionMismatch { expected: op.output_len(), got: y.len() });
    }
    crate::error::check_finite("measurements", &y.data)?;
    let mut net = build_decoder(&cfg.decoder, rng::derive_seed(cfg.seed, 0))?;
    let in_shape = cfg.decoder.input_shape();
    let z = rng::gaussian_vec(&mut rng::rng(rng::derive_seed(cfg.seed, 1)), in_shape.iter().product());
    let m = y.len() as f64;
    let mut optim = Optimizer::new(cfg.optimizer);
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    let mut checkpoints = Vec::new();
    let mut plateau: Option<(usize, Image)> = None;
    for t in 0..=cfg.iterations {
        let mut tape = Tape::new();
        let zv = tape.constant(in_shape.clone(), z.clone());
        let (xv, bound) = net.forward(&mut tape, zv)?;
        let x = tape.value(xv).to_vec();
        let r = linalg::sub(&op.forward(&x)?, &y.data);
        let loss = linalg::norm_sq(&r) / m;
        if !loss.is_finite() {
            return Err(InvError::NonFinite(format!("DIP loss at iteration {t}")));
        }
        trace.push(loss);
        let image = || Image::new(h, w, x.clone());
        if plateau.is_none() && t >= PLATEAU_WINDOW {
            let prev = trace[t - PLATEAU_WINDOW];
            if (prev - loss).abs() < PLATEAU_TOL * prev.abs() {
                plateau = Some((t, image()?));
            }
        }
        if cfg.checkpoint_every > 0 && t > 0 && (t % cfg.checkpoint_every == 0 || t == cfg.iterations) {
            checkpoints.push((t, image()?));
        }
        if t == cfg.iterations {
            let final_image = image()?;
            let (plateau_iteration, plateau_image) = match plateau {
                Some((i, img)) => (Some(i), img),
                None => (None, final_image.clone()),
            };
            return Ok(DipResult { final_image, plateau_image, plateau_iteration, loss_trace: trace, checkpoints });
        }
        let upstream = linalg::scale(&op.jtvp_vec(&x, &r)?, 2.0 / m);
        let grads = tape.backward(xv, &upstream)?;
        net.zero_grad();
        net.accumulate_grads(&bound, &grads);
        optim.step(net.params_mut().iter_mut())?;
    }
    unreachable!("loop returns at t == iterations")
}
