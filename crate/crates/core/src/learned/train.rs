use std::sync::Arc;

use invkit_neuralkit::{NeuralError, Optimizer, OptimizerKind, Tape, Var};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::risk::{probe, Pseudoinverse};
use super::{Reconstructor, TrainingRegime};
use crate::error::{InvError, Result};
use crate::image::{Image, MeasurementVector};
use crate::linalg;
use crate::operators::ForwardOperator;
use crate::rng;

/// Stream offsets keeping shuffles and probes independent of each other.
const SHUFFLE_STREAM: u64 = 0x5348_5546;
const PROBE_STREAM: u64 = 0x5052_4f42;

#[derive(Debug, Clone)]
pub struct TrainingPair {
    pub y: MeasurementVector,
    /// Clean image for supervised training, noisy copy for Noise2Noise.
    pub target: Image,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { optimizer: OptimizerKind::adam(1e-3), epochs: 10, batch_size: 8, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub regime: TrainingRegime,
    /// Mean per-sample loss over each epoch.
    pub loss_trace: Vec<f64>,
    pub samples: usize,
}

fn nonfinite(e: InvError, epoch: usize, sample: usize) -> InvError {
    match e {
        InvError::Neural(NeuralError::NonFinite(op)) => {
            InvError::NonFinite(format!("training aborted: non-finite value in `{op}` at epoch {epoch}, sample {sample}"))
        }
        other => other,
    }
}

/// Shared loop: seeded shuffle per epoch, mini-batches whose per-sample
/// gradients are computed in parallel and summed in sample order, then one
/// optimizer step per batch.
fn run<M, F>(model: &mut M, samples: usize, cfg: &TrainConfig, regime: TrainingRegime, loss: F) -> Result<TrainReport>
where
    M: Reconstructor,
    F: Fn(&M, &mut Tape, &[Var], usize, usize) -> Result<Var> + Sync,
{
    if samples == 0 {
        return Err(InvError::InvalidSpec("training dataset is empty".into()));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(InvError::InvalidSpec("epochs and batch_size must be >= 1".into()));
    }
    let mut optim = Optimizer::new(cfg.optimizer);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..samples).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::rng(rng::derive_seed(cfg.seed ^ SHUFFLE_STREAM, epoch as u64)));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let shared: &M = model;
            let results: Vec<Result<(f64, Vec<Vec<f64>>)>> = batch
                .par_iter()
                .map(|&i| {
                    let mut tape = Tape::new();
                    let vars = shared.bind(&mut tape);
                    let l = loss(shared, &mut tape, &vars, i, epoch).map_err(|e| nonfinite(e, epoch, i))?;
                    let value = tape.value(l)[0];
                    if !value.is_finite() {
                        return Err(InvError::NonFinite(format!("training loss at epoch {epoch}, sample {i}")));
                    }
                    let grads = tape.backward(l, &[1.0])?;
                    let g = vars
                        .iter()
                        .zip(shared.params())
                        .map(|(v, p)| grads.get(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p.len()]))
                        .collect();
                    Ok((value, g))
                })
                .collect();
            let mut total: Option<Vec<Vec<f64>>> = None;
            for r in results {
                let (value, g) = r?;
                epoch_loss += value;
                match &mut total {
                    None => total = Some(g),
                    Some(t) => t.iter_mut().zip(&g).for_each(|(a, b)| linalg::axpy(1.0, b, a)),
                }
            }
            let scale = 1.0 / batch.len() as f64;
            let total = total.expect("non-empty batch");
            for (p, g) in model.params_mut().into_iter().zip(total) {
                if p.requires_grad {
                    p.grad = Some(linalg::scale(&g, scale));
                }
            }
            optim.step(model.params_mut())?;
        }
        trace.push(epoch_loss / samples as f64);
    }
    Ok(TrainReport { regime, loss_trace: trace, samples })
}

pub(crate) fn supervised_core<M: Reconstructor>(model: &mut M, data: &[TrainingPair], cfg: &TrainConfig, regime: TrainingRegime) -> Result<TrainReport> {
    let (h, w) = model.image_dims();
    let inputs = data.iter().map(|p| model.prepare(&p.y.data)).collect::<Result<Vec<_>>>()?;
    for p in data {
        if p.target.dims() != (h, w) {
            return Err(InvError::DimensionMismatch { expected: h * w, got: p.target.len() });
        }
    }
    let n = (h * w) as f64;
    run(model, data.len(), cfg, regime, |m, tape, vars, i, _| {
        let out = m.record(tape, vars, &inputs[i])?;
        let t = tape.constant(vec![1, h, w], data[i].target.data().to_vec());
        let d = tape.sub(out, t)?;
        let s = tape.sum_squares(d)?;
        Ok(tape.scale(s, 1.0 / n)?)
    })
}

/// Minimizes the mean squared error `(1/n)‖f(y) − x‖²` over `(y, x)` pairs.
pub fn train_supervised<M: Reconstructor>(model: &mut M, data: &[TrainingPair], cfg: &TrainConfig) -> Result<TrainReport> {
    supervised_core(model, data, cfg, TrainingRegime::PairedXy)
}

/// Same loop as [`train_supervised`] with noisy targets `x̃`, relying on
/// `E[x̃ | y] = x⋆`.
pub fn train_noise2noise<M: Reconstructor>(model: &mut M, data: &[TrainingPair], cfg: &TrainConfig) -> Result<TrainReport> {
    supervised_core(model, data, cfg, TrainingRegime::Noise2Noise)
}

/// Independent Gaussian copies `x + N(0, σ²I)`, one seeded stream per image.
pub fn noise2noise_targets(clean: &[Image], sigma: f64, seed: u64) -> Result<Vec<Image>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(InvError::InvalidSpec(format!("target noise sigma must be >= 0, got {sigma}")));
    }
    Ok(clean
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let g = rng::gaussian_vec(&mut rng::rng(rng::derive_seed(seed, i as u64)), x.len());
            let data = x.data().iter().zip(g).map(|(v, e)| v + sigma * e).collect();
            x.with_data(data).expect("same length")
        })
        .collect())
}

/// Measurement-only training objectives.
#[derive(Debug, Clone)]
pub enum SelfSupervisedLoss {
    /// Denoising (`m = n`): `(1/n)‖y − f(y)‖² + (2σ²/n) div f − σ²`.
    Sure { sigma: f64, probes: usize, eps: f64 },
    /// General linear `A`: the estimator-dependent part of GSURE.
    Gsure { op: Arc<ForwardOperator>, sigma: f64, probes: usize, eps: f64 },
}

impl SelfSupervisedLoss {
    fn params(&self) -> (f64, usize, f64) {
        match self {
            SelfSupervisedLoss::Sure { sigma, probes, eps } | SelfSupervisedLoss::Gsure { sigma, probes, eps, .. } => (*sigma, *probes, *eps),
        }
    }
}

/// Trains on measurements alone with a Monte Carlo divergence; probes are
/// redrawn each epoch from seeded streams.
pub fn train_self_supervised<M: Reconstructor>(model: &mut M, ys: &[MeasurementVector], loss: &SelfSupervisedLoss, cfg: &TrainConfig) -> Result<TrainReport> {
    let (sigma, probes, eps) = loss.params();
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(InvError::InvalidSpec(format!("measurement-only training needs sigma > 0, got {sigma}")));
    }
    if probes == 0 || !(eps > 0.0) {
        return Err(InvError::InvalidSpec("divergence needs probes >= 1 and eps > 0".into()));
    }
    let (h, w) = model.image_dims();
    let n = h * w;
    let inputs = ys.iter().map(|y| model.prepare(&y.data)).collect::<Result<Vec<_>>>()?;
    let probe_seed = |epoch: usize, i: usize| rng::derive_seed(rng::derive_seed(cfg.seed ^ PROBE_STREAM, epoch as u64), i as u64);
    let shape = vec![1, h, w];
    match loss {
        SelfSupervisedLoss::Sure { .. } => {
            if let Some(y) = ys.iter().find(|y| y.len() != n) {
                return Err(InvError::InvalidSpec(format!("SURE needs a denoising setup (m = n = {n}), got m = {}", y.len())));
            }
            run(model, ys.len(), cfg, TrainingRegime::YOnlySure, |m, tape, vars, i, epoch| {
                let y = &ys[i].data;
                let out = m.record(tape, vars, &inputs[i])?;
                let yc = tape.constant(shape.clone(), y.clone());
                let r = tape.sub(yc, out)?;
                let fit = tape.sum_squares(r)?;
                let mut total = tape.scale(fit, 1.0 / n as f64)?;
                let seed = probe_seed(epoch, i);
                for k in 0..probes {
                    let b = probe(seed, k, n);
                    let mut yp = y.clone();
                    linalg::axpy(eps, &b, &mut yp);
                    let outp = m.record(tape, vars, &m.prepare(&yp)?)?;
                    let d = tape.sub(outp, out)?;
                    let bc = tape.constant(shape.clone(), b);
                    let dd = tape.dot(d, bc)?;
                    let term = tape.scale(dd, 2.0 * sigma * sigma / (n as f64 * eps * probes as f64))?;
                    total = tape.add(total, term)?;
                }
                Ok(tape.offset(total, &[-sigma * sigma])?)
            })
        }
        SelfSupervisedLoss::Gsure { op, .. } => {
            let pinv = Pseudoinverse::new(op)?;
            if op.input_dims() != (h, w) {
                return Err(InvError::DimensionMismatch { expected: n, got: op.input_len() });
            }
            let x_ml = ys.iter().map(|y| pinv.apply(&y.data)).collect::<Result<Vec<_>>>()?;
            let m_len = op.output_len();
            run(model, ys.len(), cfg, TrainingRegime::YOnlyGsure, |m, tape, vars, i, epoch| {
                let y = &ys[i].data;
                let out = m.record(tape, vars, &inputs[i])?;
                let proj = pinv.project(tape.value(out))?;
                let op_c = Arc::clone(op);
                let p_out = tape.custom(out, proj, shape.clone(), move |u| {
                    Pseudoinverse::new(&op_c).and_then(|p| p.project(u)).expect("projection of image-sized vector")
                })?;
                let pn = tape.sum_squares(p_out)?;
                let xc = tape.constant(shape.clone(), x_ml[i].clone());
                let cross = tape.dot(out, xc)?;
                let cross = tape.scale(cross, -2.0)?;
                let mut total = tape.add(pn, cross)?;
                let seed = probe_seed(epoch, i);
                for k in 0..probes {
                    let b = probe(seed, k, m_len);
                    let wb = pinv.apply(&b)?;
                    let mut yp = y.clone();
                    linalg::axpy(eps, &b, &mut yp);
                    let outp = m.record(tape, vars, &m.prepare(&yp)?)?;
                    let d = tape.sub(outp, out)?;
                    let wc = tape.constant(shape.clone(), wb);
                    let dd = tape.dot(d, wc)?;
                    let term = tape.scale(dd, 2.0 * sigma * sigma / (eps * probes as f64))?;
                    total = tape.add(total, term)?;
                }
                Ok(tape.scale(total, 1.0 / n as f64)?)
            })
        }
    }
}
