use invkit_neuralkit::{build_decoder, DecoderConfig, LayerSpec, Network, Optimizer, OptimizerKind, Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

use super::train::{supervised_core, TrainConfig, TrainReport, TrainingPair};
use super::{Reconstructor, TrainingRegime};
use crate::error::{InvError, Result};
use crate::image::{Image, MeasurementVector};
use crate::linalg;
use crate::operators::{make_operator, Ensemble, ForwardOperator, OperatorSpec};
use crate::rng;
use crate::solvers::RestartOutcome;

const MAX_BACKTRACKS: usize = 60;
const ENCODER_HIDDEN: usize = 64;

/// Where a generator came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: String,
    pub latent_dim: usize,
    pub dataset_id: String,
    pub seed: u64,
}

/// Decoder `G: ℝᵏ → ℝⁿ` producing `height × width` images.
#[derive(Debug, Clone)]
pub struct Generator {
    pub decoder: Network,
    latent_dim: usize,
    height: usize,
    width: usize,
    pub provenance: Provenance,
}

impl Generator {
    /// Wraps a network taking a length-`k` vector to `[1, height, width]`;
    /// requires `k ≤ n/4`.
    pub fn from_network(decoder: Network, latent_dim: usize, height: usize, width: usize, provenance: Provenance) -> Result<Self> {
        let n = height * width;
        if 4 * latent_dim > n {
            return Err(InvError::InvalidSpec(format!("latent dimension {latent_dim} exceeds n/4 = {}", n / 4)));
        }
        let out = decoder.output_shape(&[latent_dim])?;
        if out.iter().product::<usize>() != n {
            return Err(InvError::InvalidSpec(format!("generator output {out:?} does not match {height}x{width}")));
        }
        Ok(Self { decoder, latent_dim, height, width, provenance })
    }

    /// `G(z) = Bz` for a row-major `n × k` matrix `B`.
    pub fn linear(matrix: &[f64], latent_dim: usize, height: usize, width: usize) -> Result<Self> {
        let n = height * width;
        if matrix.len() != n * latent_dim {
            return Err(InvError::DimensionMismatch { expected: n * latent_dim, got: matrix.len() });
        }
        let mut net = Network::new(
            Some(vec![latent_dim]),
            vec![LayerSpec::Dense { inputs: latent_dim, outputs: n }, LayerSpec::Reshape { shape: vec![1, height, width] }],
            0,
        )?;
        let mut flat = matrix.to_vec();
        flat.extend(std::iter::repeat_n(0.0, n));
        net.load_flat(&flat)?;
        let provenance = Provenance { method: "linear".into(), latent_dim, dataset_id: "none".into(), seed: 0 };
        Self::from_network(net, latent_dim, height, width, provenance)
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn generate(&self, z: &[f64]) -> Result<Image> {
        if z.len() != self.latent_dim {
            return Err(InvError::DimensionMismatch { expected: self.latent_dim, got: z.len() });
        }
        Image::new(self.height, self.width, self.decoder.predict(&[self.latent_dim], z)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub channels: usize,
    pub stages: usize,
    pub kernel: usize,
    pub train: TrainConfig,
    pub dataset_id: String,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            channels: 8,
            stages: 2,
            kernel: 3,
            train: TrainConfig { optimizer: OptimizerKind::adam(3e-3), epochs: 40, batch_size: 8, seed: 0 },
            dataset_id: "unnamed".into(),
        }
    }
}

/// Encoder `ℝⁿ → ℝᵏ` (dense, relu, dense) followed by the decoder.
struct AutoEncoder {
    encoder: Network,
    decoder: Network,
    height: usize,
    width: usize,
}

impl Reconstructor for AutoEncoder {
    fn image_dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn params(&self) -> Vec<&Tensor> {
        self.encoder.params().iter().chain(self.decoder.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.encoder.params_mut().iter_mut().chain(self.decoder.params_mut().iter_mut()).collect()
    }

    fn prepare(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(y.to_vec())
    }

    fn record(&self, tape: &mut Tape, params: &[Var], input: &[f64]) -> Result<Var> {
        let (pe, pd) = params.split_at(self.encoder.params().len());
        let x = tape.constant(vec![input.len()], input.to_vec());
        let z = self.encoder.forward_with(tape, pe, x)?;
        Ok(self.decoder.forward_with(tape, pd, z)?)
    }
}

/// Trains an autoencoder on clean images by reconstruction loss and keeps
/// its decoder. This deterministic stand-in replaces adversarial or
/// variational training.
pub fn train_generator(xs: &[Image], latent_dim: usize, cfg: &GeneratorConfig) -> Result<(Generator, TrainReport)> {
    let first = xs.first().ok_or_else(|| InvError::InvalidSpec("generator training set is empty".into()))?;
    let (h, w) = first.dims();
    let n = h * w;
    if latent_dim == 0 || 4 * latent_dim > n {
        return Err(InvError::InvalidSpec(format!("latent dimension must be in 1..={}, got {latent_dim}", n / 4)));
    }
    let seed = cfg.train.seed;
    let encoder = Network::new(
        Some(vec![n]),
        vec![
            LayerSpec::Dense { inputs: n, outputs: ENCODER_HIDDEN },
            LayerSpec::Relu,
            LayerSpec::Dense { inputs: ENCODER_HIDDEN, outputs: latent_dim },
        ],
        rng::derive_seed(seed, 1),
    )?;
    let dcfg = DecoderConfig { channels: cfg.channels, stages: cfg.stages, height: h, width: w, kernel: cfg.kernel, latent_dim: Some(latent_dim) };
    let decoder = build_decoder(&dcfg, rng::derive_seed(seed, 2))?;
    let mut ae = AutoEncoder { encoder, decoder, height: h, width: w };
    let pairs: Vec<TrainingPair> = xs
        .iter()
        .map(|x| TrainingPair { y: MeasurementVector::new(x.data().to_vec(), "x_only"), target: x.clone() })
        .collect();
    let report = supervised_core(&mut ae, &pairs, &cfg.train, TrainingRegime::XOnly)?;
    let provenance = Provenance { method: "deterministic_autoencoder".into(), latent_dim, dataset_id: cfg.dataset_id.clone(), seed };
    Ok((Generator::from_network(ae.decoder, latent_dim, h, w, provenance)?, report))
}

/// Latent-space search strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatentOptimizer {
    Adam { lr: f64 },
    /// Gradient descent with Armijo backtracking; the trial step doubles
    /// after each accepted move.
    Backtracking { initial_step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsgmConfig {
    pub restarts: usize,
    pub steps: usize,
    pub optimizer: LatentOptimizer,
    pub seed: u64,
}

impl Default for CsgmConfig {
    fn default() -> Self {
        Self { restarts: 3, steps: 500, optimizer: LatentOptimizer::Adam { lr: 0.05 }, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsgmResult {
    pub z: Vec<f64>,
    pub x: Image,
    /// `‖A G(ẑ) − y‖²` at the returned latent.
    pub loss: f64,
    pub restarts: Vec<RestartOutcome>,
    /// Loss per step of the winning restart.
    pub loss_trace: Vec<f64>,
}

/// Measurement loss and its gradient with respect to `z`.
fn loss_and_grad(g: &Generator, op: &ForwardOperator, y: &[f64], z: &[f64], want_grad: bool) -> Result<(f64, Vec<f64>)> {
    let k = g.latent_dim;
    let mut tape = Tape::new();
    let zv = tape.constant(vec![k], z.to_vec());
    let (xv, _) = g.decoder.forward(&mut tape, zv)?;
    let x = tape.value(xv).to_vec();
    let r = linalg::sub(&op.forward(&x)?, y);
    let loss = linalg::norm_sq(&r);
    if !want_grad || k == 0 {
        return Ok((loss, vec![0.0; k]));
    }
    let upstream = linalg::scale(&op.jtvp_vec(&x, &r)?, 2.0);
    let grads = tape.backward(xv, &upstream)?;
    let gz = grads.get(zv).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; k]);
    Ok((loss, gz))
}

struct LatentRun {
    best_z: Vec<f64>,
    best_loss: f64,
    initial: f64,
    trace: Vec<f64>,
}

fn descend(g: &Generator, op: &ForwardOperator, y: &[f64], z0: Vec<f64>, cfg: &CsgmConfig) -> Result<LatentRun> {
    let (initial, mut grad) = loss_and_grad(g, op, y, &z0, true)?;
    let mut run = LatentRun { best_z: z0.clone(), best_loss: initial, initial, trace: Vec::with_capacity(cfg.steps) };
    let mut z = z0;
    let mut loss = initial;
    match cfg.optimizer {
        LatentOptimizer::Adam { lr } => {
            let mut param = Tensor::new(vec![z.len()], z).with_grad();
            let mut adam = Optimizer::new(OptimizerKind::adam(lr));
            for _ in 0..cfg.steps {
                param.grad = Some(grad);
                adam.step([&mut param])?;
                (loss, grad) = loss_and_grad(g, op, y, &param.data, true)?;
                if !loss.is_finite() {
                    return Err(InvError::NonFinite("latent search loss".into()));
                }
                run.trace.push(loss);
                if loss < run.best_loss {
                    run.best_loss = loss;
                    run.best_z = param.data.clone();
                }
            }
        }
        LatentOptimizer::Backtracking { initial_step } => {
            let mut t = initial_step;
            for _ in 0..cfg.steps {
                let gg = linalg::norm_sq(&grad);
                if gg == 0.0 || loss == 0.0 {
                    break;
                }
                let mut accepted = None;
                for _ in 0..MAX_BACKTRACKS {
                    let mut trial = z.clone();
                    linalg::axpy(-t, &grad, &mut trial);
                    let (lt, _) = loss_and_grad(g, op, y, &trial, false)?;
                    if lt.is_finite() && lt <= loss - 0.5 * t * gg {
                        accepted = Some((trial, lt));
                        break;
                    }
                    t *= 0.5;
                }
                let Some((next, _)) = accepted else { break };
                z = next;
                (loss, grad) = loss_and_grad(g, op, y, &z, true)?;
                t *= 2.0;
                run.trace.push(loss);
                if loss < run.best_loss {
                    run.best_loss = loss;
                    run.best_z = z.clone();
                }
            }
        }
    }
    Ok(run)
}

/// Searches the latent space for `argmin_z ‖A G(z) − y‖²` from seeded
/// Gaussian starts and returns the restart with the lowest loss. Each
/// restart keeps the best iterate it visited.
pub fn csgm_recover(g: &Generator, op: &ForwardOperator, y: &MeasurementVector, cfg: &CsgmConfig) -> Result<CsgmResult> {
    if cfg.restarts == 0 {
        return Err(InvError::InvalidSpec("restarts must be >= 1".into()));
    }
    if op.input_dims() != g.image_dims() {
        return Err(InvError::DimensionMismatch { expected: op.input_len(), got: g.height * g.width });
    }
    if y.len() != op.output_len() {
        return Err(InvError::DimensionMismatch { expected: op.output_len(), got: y.len() });
    }
    let mut best: Option<LatentRun> = None;
    let mut outcomes = Vec::with_capacity(cfg.restarts);
    for r in 0..cfg.restarts {
        let z0 = rng::gaussian_vec(&mut rng::rng(rng::derive_seed(cfg.seed, r as u64)), g.latent_dim);
        match descend(g, op, &y.data, z0, cfg) {
            Ok(run) if run.best_loss.is_finite() => {
                outcomes.push(RestartOutcome { initial_objective: run.initial, final_objective: run.best_loss });
                if best.as_ref().is_none_or(|b| run.best_loss < b.best_loss) {
                    best = Some(run);
                }
            }
            Ok(_) | Err(InvError::NonFinite(_)) | Err(InvError::Neural(invkit_neuralkit::NeuralError::NonFinite(_))) => {
                outcomes.push(RestartOutcome { initial_objective: f64::NAN, final_objective: f64::NAN });
            }
            Err(e) => return Err(e),
        }
    }
    let run = best.ok_or_else(|| InvError::Divergence(format!("all {} latent restarts produced non-finite losses", cfg.restarts)))?;
    let x = g.generate(&run.best_z)?;
    Ok(CsgmResult { z: run.best_z, x, loss: run.best_loss, restarts: outcomes, loss_trace: run.trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub m: usize,
    /// Relative recovery error `‖x̂ − x⋆‖/‖x⋆‖` per trial.
    pub errors: Vec<f64>,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Recovery error against measurement count. Trial `t` plants
/// `x⋆ = G(z⋆)` with the same `z⋆` for every `m` and draws a fresh
/// compressive matrix per `(m, t)`; measurements are noiseless.
pub fn csgm_measurement_sweep(g: &Generator, ensemble: Ensemble, m_list: &[usize], trials: usize, cfg: &CsgmConfig, seed: u64) -> Result<SweepTable> {
    if trials == 0 {
        return Err(InvError::InvalidSpec("trials must be >= 1".into()));
    }
    let (h, w) = g.image_dims();
    let planted: Vec<Image> = (0..trials)
        .map(|t| g.generate(&rng::gaussian_vec(&mut rng::rng(rng::derive_seed(seed, t as u64)), g.latent_dim)))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let mut errors = Vec::with_capacity(trials);
        for (t, xs) in planted.iter().enumerate() {
            let op_seed = rng::derive_seed(rng::derive_seed(seed ^ 0xC5_6A, m as u64), t as u64);
            let op = make_operator(&OperatorSpec::Compressive { height: h, width: w, m, seed: op_seed, ensemble })?;
            let y = op.apply(xs)?;
            let run_cfg = CsgmConfig { seed: rng::derive_seed(cfg.seed, t as u64), ..*cfg };
            let res = csgm_recover(g, &op, &y, &run_cfg)?;
            errors.push(linalg::dist(res.x.data(), xs.data()) / linalg::norm(xs.data()).max(f64::MIN_POSITIVE));
        }
        let med = median(&errors);
        rows.push(SweepRow { m, errors, median: med });
    }
    Ok(SweepTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_generator_ignores_measurements() {
        let net = Network::new(Some(vec![0]), vec![LayerSpec::Dense { inputs: 0, outputs: 16 }, LayerSpec::Reshape { shape: vec![1, 4, 4] }], 3).unwrap();
        let prov = Provenance { method: "constant".into(), latent_dim: 0, dataset_id: "none".into(), seed: 3 };
        let g = Generator::from_network(net, 0, 4, 4, prov).unwrap();
        let c = g.generate(&[]).unwrap();
        let op = make_operator(&OperatorSpec::Identity { height: 4, width: 4 }).unwrap();
        for v in [0.0, 1.0, -3.0] {
            let y = MeasurementVector::new(vec![v; 16], "identity");
            let r = csgm_recover(&g, &op, &y, &CsgmConfig::default()).unwrap();
            assert_eq!(r.x, c);
        }
    }

    #[test]
    fn latent_dimension_limit() {
        assert!(Generator::linear(&vec![0.0; 16 * 5], 5, 4, 4).is_err());
        assert!(Generator::linear(&vec![0.0; 16 * 4], 4, 4, 4).is_ok());
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
