use std::sync::Arc;
use std::time::Instant;

use invkit_neuralkit::{build_denoiser, OptimizerKind};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::metrics::{error_map, psnr, region_mean, ssim, SSIM_SETTINGS};
use super::perturb::{perturb_operator, Perturbation};
use super::phantom::{centered, insert_feature, make_phantom, Feature};
use super::report::{ImageRow, Panel, Report, RobustnessReport, RobustnessRow};
use super::scenario::{DenoiserSpec, Metric, MethodSpec, Scenario};
use crate::error::{InvError, Result};
use crate::image::{Image, MeasurementVector};
use crate::learned::{
    csgm_recover, dip_reconstruct, noise2noise_targets, residual_body, train_generator, train_noise2noise, train_self_supervised,
    train_supervised, ApproxInverse, CsgmConfig, DipConfig, Generator, GeneratorConfig, LatentOptimizer, Reconstructor, ResidualModel,
    SelfSupervisedLoss, TrainConfig, TrainingPair, TrainingRegime, UnrolledModel,
};
use crate::noise::{add_noise, NoiseModel};
use crate::operators::{make_operator, ForwardOperator, OperatorSpec};
use crate::regularizers::{Regularizer, DEFAULT_TV_ITERS};
use crate::rng::derive_seed;
use crate::solvers::{
    admm, estimate_norm_sq, ml_least_squares, phase_retrieval_gd, pnp_admm, prox_gradient, red_solve, Denoiser, ProxDenoiser,
    SolveConfig, DEFAULT_STEP_FRACTION, POWER_ITERS,
};

const DATA_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;
const TRAIN_STREAM: u64 = 4;
const PERTURB_STREAM: u64 = 5;
const TARGET_STREAM: u64 = 6;
const METHOD_STREAM: u64 = 7;

/// Hex SHA-256 of the scenario's canonical JSON form.
pub fn config_hash(s: &Scenario) -> String {
    let bytes = serde_json::to_vec(s).expect("scenario serializes");
    hex::encode(Sha256::digest(&bytes))
}

struct Sample {
    id: usize,
    x: Image,
}

struct Data {
    train: Vec<Sample>,
    test: Vec<Sample>,
    /// Top-left corner and size of the inserted test feature.
    feature: Option<(usize, usize, usize)>,
}

fn make_data(s: &Scenario) -> Result<Data> {
    let (h, w) = s.operator.image_dims();
    let d = &s.dataset;
    let mut ids: Vec<usize> = (0..d.count).collect();
    ids.shuffle(&mut crate::rng::rng(derive_seed(s.seed, SPLIT_STREAM)));
    let n_train = d.count * 4 / 5;
    let phantom = |id: usize| make_phantom(d.phantom, h, w, derive_seed(derive_seed(s.seed, DATA_STREAM), id as u64));
    let train = ids[..n_train].iter().map(|&id| Ok(Sample { id, x: phantom(id)? })).collect::<Result<Vec<_>>>()?;
    let mut test_ids = ids[n_train..].to_vec();
    test_ids.sort_unstable();
    let mut feature = None;
    let mut test = Vec::with_capacity(test_ids.len());
    for id in test_ids {
        let mut x = phantom(id)?;
        if let Some(f) = d.test_feature {
            let Feature::Square { size, .. } = f.feature;
            let (row, col) = f.position.unwrap_or_else(|| centered(&x, size));
            x = insert_feature(&x, f.feature, row, col)?;
            if size > 0 {
                feature = Some((row, col, size));
            }
        }
        test.push(Sample { id, x });
    }
    Ok(Data { train, test, feature })
}

fn noise_seed(s: &Scenario, id: usize) -> u64 {
    derive_seed(derive_seed(s.seed, NOISE_STREAM), id as u64)
}

fn measure(op: &ForwardOperator, x: &Image, sigma: f64, seed: u64) -> Result<MeasurementVector> {
    add_noise(&op.apply(x)?, &NoiseModel { sigma, seed })
}

/// A residual CNN applied to images, used as a PnP/RED denoiser.
struct LearnedDenoiser(ResidualModel);

impl Denoiser for LearnedDenoiser {
    fn denoise(&self, x: &Image) -> Result<Image> {
        self.0.reconstruct(&MeasurementVector::new(x.data().to_vec(), "identity"))
    }
}

enum DenoiserImpl {
    Prox(ProxDenoiser),
    Learned(LearnedDenoiser),
}

impl DenoiserImpl {
    fn as_dyn(&self) -> &dyn Denoiser {
        match self {
            DenoiserImpl::Prox(d) => d,
            DenoiserImpl::Learned(d) => d,
        }
    }
}

enum Fitted {
    Baseline(ApproxInverse),
    Ml { lambda: f64, cfg: SolveConfig },
    ProxGradient { reg: Regularizer, cfg: SolveConfig },
    Admm { reg: Regularizer, rho: f64, cfg: SolveConfig },
    Pnp { den: DenoiserImpl, rho: f64, cfg: SolveConfig },
    Red { den: DenoiserImpl, lambda: f64, cfg: SolveConfig },
    Phase { restarts: usize, cfg: SolveConfig },
    Dip { iterations: usize, lr: f64, seed: u64 },
    Residual(ResidualModel),
    Unrolled(UnrolledModel),
    Csgm(Box<Generator>, CsgmConfig),
}

/// Data, trained method and nominal operator of a scenario, ready to be
/// evaluated against any test-time operator.
struct Prepared<'a> {
    s: &'a Scenario,
    op: Arc<ForwardOperator>,
    data: Data,
    fitted: Fitted,
    training_loss: Vec<f64>,
}

fn train_config(s: &Scenario, t: &super::scenario::TrainSpec, stream: u64) -> TrainConfig {
    TrainConfig { optimizer: OptimizerKind::adam(t.lr), epochs: t.epochs, batch_size: t.batch_size, seed: derive_seed(derive_seed(s.seed, TRAIN_STREAM), stream) }
}

fn solve_cfg(max_iters: usize, seed: u64) -> SolveConfig {
    SolveConfig { max_iters, seed, ..SolveConfig::default() }
}

fn paired(s: &Scenario, op: &ForwardOperator, data: &Data) -> Result<Vec<TrainingPair>> {
    data.train
        .iter()
        .map(|smp| Ok(TrainingPair { y: measure(op, &smp.x, s.dataset.noise_sigma, noise_seed(s, smp.id))?, target: smp.x.clone() }))
        .collect()
}

fn build_denoiser_impl(s: &Scenario, spec: &DenoiserSpec, data: &Data, losses: &mut Vec<f64>) -> Result<DenoiserImpl> {
    match *spec {
        DenoiserSpec::Tv { lambda } => Ok(DenoiserImpl::Prox(ProxDenoiser { reg: Regularizer::Tv { lambda, inner_iters: DEFAULT_TV_ITERS }, step: 1.0 })),
        DenoiserSpec::Learned { sigma, channels, depth, train } => {
            let (h, w) = s.operator.image_dims();
            let id_op = Arc::new(make_operator(&OperatorSpec::Identity { height: h, width: w })?);
            let body = residual_body(channels, depth, derive_seed(s.seed, METHOD_STREAM))?;
            let mut model = ResidualModel::new(Arc::clone(&id_op), body, ApproxInverse::Identity)?;
            let target_seed = derive_seed(s.seed, TARGET_STREAM);
            let pairs = data
                .train
                .iter()
                .map(|smp| {
                    Ok(TrainingPair { y: measure(&id_op, &smp.x, sigma, derive_seed(target_seed, smp.id as u64))?, target: smp.x.clone() })
                })
                .collect::<Result<Vec<_>>>()?;
            let rep = train_supervised(&mut model, &pairs, &train_config(s, &train, 1))?;
            losses.extend(rep.loss_trace);
            Ok(DenoiserImpl::Learned(LearnedDenoiser(model)))
        }
    }
}

fn prepare(s: &Scenario) -> Result<Prepared<'_>> {
    s.validate()?;
    let op = Arc::new(make_operator(&s.operator)?);
    let data = make_data(s)?;
    let sigma = s.dataset.noise_sigma;
    let method_seed = derive_seed(s.seed, METHOD_STREAM);
    let mut losses = Vec::new();
    let fitted = match &s.method {
        MethodSpec::Baseline { inverse } => Fitted::Baseline(match inverse {
            Some(i) => *i,
            None => ApproxInverse::default_for(&s.operator)?,
        }),
        MethodSpec::MlLeastSquares { lambda, max_iters } => Fitted::Ml { lambda: *lambda, cfg: solve_cfg(*max_iters, method_seed) },
        MethodSpec::ProxGradient { regularizer, max_iters } => Fitted::ProxGradient { reg: *regularizer, cfg: solve_cfg(*max_iters, method_seed) },
        MethodSpec::Admm { regularizer, rho, max_iters } => Fitted::Admm { reg: *regularizer, rho: *rho, cfg: solve_cfg(*max_iters, method_seed) },
        MethodSpec::Pnp { denoiser, rho, max_iters } => {
            Fitted::Pnp { den: build_denoiser_impl(s, denoiser, &data, &mut losses)?, rho: *rho, cfg: solve_cfg(*max_iters, method_seed) }
        }
        MethodSpec::Red { denoiser, lambda, max_iters } => {
            Fitted::Red { den: build_denoiser_impl(s, denoiser, &data, &mut losses)?, lambda: *lambda, cfg: solve_cfg(*max_iters, method_seed) }
        }
        MethodSpec::PhaseRetrieval { restarts, max_iters } => Fitted::Phase { restarts: *restarts, cfg: solve_cfg(*max_iters, method_seed) },
        MethodSpec::Dip { iterations, lr } => Fitted::Dip { iterations: *iterations, lr: *lr, seed: method_seed },
        MethodSpec::Residual { channels, depth, inverse, probes, probe_eps, train } => {
            let inverse = match inverse {
                Some(i) => *i,
                None => ApproxInverse::default_for(&s.operator)?,
            };
            let body = residual_body(*channels, *depth, method_seed)?;
            let mut model = ResidualModel::new(Arc::clone(&op), body, inverse)?;
            let cfg = train_config(s, train, 0);
            let report = match s.regime {
                TrainingRegime::PairedXy | TrainingRegime::XOnly => train_supervised(&mut model, &paired(s, &op, &data)?, &cfg)?,
                TrainingRegime::Noise2Noise => {
                    let clean: Vec<Image> = data.train.iter().map(|smp| smp.x.clone()).collect();
                    let targets = noise2noise_targets(&clean, sigma, derive_seed(s.seed, TARGET_STREAM))?;
                    let pairs = paired(s, &op, &data)?
                        .into_iter()
                        .zip(targets)
                        .map(|(p, t)| TrainingPair { y: p.y, target: t })
                        .collect::<Vec<_>>();
                    train_noise2noise(&mut model, &pairs, &cfg)?
                }
                TrainingRegime::YOnlySure | TrainingRegime::YOnlyGsure => {
                    let ys = paired(s, &op, &data)?.into_iter().map(|p| p.y).collect::<Vec<_>>();
                    let loss = if s.regime == TrainingRegime::YOnlySure {
                        SelfSupervisedLoss::Sure { sigma, probes: *probes, eps: *probe_eps }
                    } else {
                        SelfSupervisedLoss::Gsure { op: Arc::clone(&op), sigma, probes: *probes, eps: *probe_eps }
                    };
                    train_self_supervised(&mut model, &ys, &loss, &cfg)?
                }
                TrainingRegime::Untrained => unreachable!("validated: residual is not accepted without training data"),
            };
            losses.extend(report.loss_trace);
            Fitted::Residual(model)
        }
        MethodSpec::Unrolled { blocks, channels, depth, eta, train } => {
            let eta = match eta {
                Some(e) => *e,
                None => DEFAULT_STEP_FRACTION / estimate_norm_sq(&op, POWER_ITERS, method_seed)?,
            };
            let mut prox = build_denoiser(*channels, *depth, method_seed)?;
            // start every block as the identity so the untrained model is plain proximal gradient
            prox.zero_last_layer();
            let mut model = UnrolledModel::new(Arc::clone(&op), prox, *blocks, eta)?;
            let report = train_supervised(&mut model, &paired(s, &op, &data)?, &train_config(s, train, 0))?;
            losses.extend(report.loss_trace);
            Fitted::Unrolled(model)
        }
        MethodSpec::Csgm { latent_dim, restarts, steps, lr, train } => {
            let xs: Vec<Image> = data.train.iter().map(|smp| smp.x.clone()).collect();
            let gcfg = GeneratorConfig { train: train_config(s, train, 0), dataset_id: s.id.clone(), ..GeneratorConfig::default() };
            let (g, report) = train_generator(&xs, *latent_dim, &gcfg)?;
            losses.extend(report.loss_trace);
            let ccfg = CsgmConfig { restarts: *restarts, steps: *steps, optimizer: LatentOptimizer::Adam { lr: *lr }, seed: method_seed };
            Fitted::Csgm(Box::new(g), ccfg)
        }
    };
    Ok(Prepared { s, op, data, fitted, training_loss: losses })
}

fn reseed(cfg: &SolveConfig, id: usize) -> SolveConfig {
    SolveConfig { seed: derive_seed(cfg.seed, id as u64), ..*cfg }
}

impl Fitted {
    fn reconstruct(&self, op: &ForwardOperator, y: &MeasurementVector, id: usize) -> Result<Image> {
        Ok(match self {
            Fitted::Baseline(inv) => inv.apply(op, y)?,
            Fitted::Ml { lambda, cfg } => ml_least_squares(op, y, *lambda, &reseed(cfg, id))?.reconstruction,
            Fitted::ProxGradient { reg, cfg } => prox_gradient(op, y, reg, &reseed(cfg, id))?.reconstruction,
            Fitted::Admm { reg, rho, cfg } => admm(op, y, reg, *rho, &reseed(cfg, id))?.reconstruction,
            Fitted::Pnp { den, rho, cfg } => pnp_admm(op, y, den.as_dyn(), *rho, &reseed(cfg, id))?.reconstruction,
            Fitted::Red { den, lambda, cfg } => red_solve(op, y, den.as_dyn(), *lambda, &reseed(cfg, id))?.reconstruction,
            Fitted::Phase { restarts, cfg } => phase_retrieval_gd(op, y, *restarts, &reseed(cfg, id))?.reconstruction,
            Fitted::Dip { iterations, lr, seed } => {
                let (h, w) = op.input_dims();
                let mut cfg = DipConfig::new(h, w, *iterations, derive_seed(*seed, id as u64));
                cfg.optimizer = OptimizerKind::adam(*lr);
                cfg.checkpoint_every = 0;
                dip_reconstruct(op, y, &cfg)?.plateau_image
            }
            Fitted::Residual(m) => m.reconstruct(y)?,
            Fitted::Unrolled(m) => m.reconstruct(y)?,
            Fitted::Csgm(g, cfg) => csgm_recover(g, op, y, &CsgmConfig { seed: derive_seed(cfg.seed, id as u64), ..*cfg })?.x,
        })
    }
}

fn backproject(op: &ForwardOperator, y: &MeasurementVector) -> Result<Image> {
    let (h, w) = op.input_dims();
    match op.inner() {
        Some(inner) => Image::new(h, w, inner.transpose(&y.data)?),
        None => Image::new(h, w, op.transpose(&y.data)?),
    }
}

fn evaluate(p: &Prepared, perturbation: Option<Perturbation>) -> Result<Report> {
    let s = p.s;
    let test_op = match perturbation {
        Some(kind) => Arc::new(perturb_operator(&p.op, kind, derive_seed(s.seed, PERTURB_STREAM))?),
        None => Arc::clone(&p.op),
    };
    let results: Vec<Result<(ImageRow, Panel, Option<f64>)>> = p
        .data
        .test
        .par_iter()
        .map(|smp| {
            let seed = noise_seed(s, smp.id);
            let y = measure(&test_op, &smp.x, s.dataset.noise_sigma, seed)?;
            let start = Instant::now();
            let recon = p.fitted.reconstruct(&p.op, &y, smp.id)?;
            let runtime_ms = if s.record_timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
            if recon.data().iter().any(|v| !v.is_finite()) {
                return Err(InvError::NonFinite(format!("reconstruction of test image {}", smp.id)));
            }
            let psnr_v = if s.metrics.contains(&Metric::Psnr) { Some(psnr(&smp.x, &recon, 1.0)?) } else { None };
            let ssim_v = if s.metrics.contains(&Metric::Ssim) { Some(ssim(&smp.x, &recon)?) } else { None };
            let error = error_map(&smp.x, &recon)?;
            let mae = match p.data.feature {
                Some((r, c, size)) => Some(region_mean(&error, r, c, size)?),
                None => None,
            };
            let row = ImageRow { image_id: smp.id, psnr: psnr_v, ssim: ssim_v, runtime_ms, seed };
            let panel = Panel { image_id: smp.id, truth: smp.x.clone(), backprojection: backproject(&p.op, &y)?, reconstruction: recon, error };
            Ok((row, panel, mae))
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut panels = Vec::with_capacity(results.len());
    let mut maes = Vec::new();
    for r in results {
        let (row, panel, mae) = r?;
        rows.push(row);
        panels.push(panel);
        maes.extend(mae);
    }
    let scenario_id = match perturbation {
        Some(k) => format!("{}/{}", s.id, k.label()),
        None => s.id.clone(),
    };
    Ok(Report {
        scenario_id,
        method: s.method.name().to_string(),
        rows,
        panels,
        feature_mae: p.data.feature.map(|_| maes),
        training_loss: p.training_loss.clone(),
        perturbation,
        config_hash: config_hash(s),
        seed: s.seed,
        ssim_settings: SSIM_SETTINGS,
    })
}

/// Generates the data, trains if the regime requires it, reconstructs the
/// test split from measurements of the (possibly perturbed) test operator
/// and scores every image.
pub fn run_scenario(s: &Scenario) -> Result<Report> {
    let p = prepare(s)?;
    evaluate(&p, s.test_perturbation)
}

/// Trains once on the nominal operator, then evaluates the same model on
/// measurements from each perturbed operator. Test images and noise are
/// shared across rows.
pub fn robustness_suite(base: &Scenario, perturbations: &[Perturbation]) -> Result<RobustnessReport> {
    if base.test_perturbation.is_some() {
        return Err(InvError::InvalidSpec("robustness base scenario must use the nominal test operator".into()));
    }
    if !base.method.is_trained() {
        return Err(InvError::InvalidSpec(format!("robustness suite needs a learned method, got `{}`", base.method.name())));
    }
    let p = prepare(base)?;
    let baseline = evaluate(&p, None)?;
    let base_median = baseline.psnr_median().unwrap_or(f64::NAN);
    let rows = perturbations
        .iter()
        .map(|&kind| {
            let report = evaluate(&p, Some(kind))?;
            let drop = base_median - report.psnr_median().unwrap_or(f64::NAN);
            Ok(RobustnessRow { perturbation: kind, report, psnr_drop_median: drop })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RobustnessReport { baseline, rows })
}
