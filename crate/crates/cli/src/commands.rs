//! The four subcommands. Each is a pure function of the resolved
//! configuration and its input files, and writes the configuration it ran
//! with next to its outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use invkit_core::bench::{
    mse, psnr, robustness_suite, run_scenario, ssim, write_aggregate_csv, write_image_csv, write_robustness_csv, Report,
    RobustnessReport,
};
use invkit_core::learned::{
    csgm_recover, dip_reconstruct, residual_body, train_generator, train_noise2noise, train_self_supervised,
    train_supervised, CsgmConfig, DipConfig, Generator, GeneratorConfig, LatentOptimizer, Provenance, Reconstructor, ResidualModel,
    SelfSupervisedLoss, TrainConfig, TrainReport, TrainingPair, TrainingRegime, UnrolledModel,
};
use invkit_core::rng::derive_seed;
use invkit_core::solvers::{
    admm, estimate_norm_sq, ml_least_squares, phase_retrieval_gd, pnp_admm, prox_gradient, red_solve, Denoiser, ProxDenoiser,
    SolveConfig, DEFAULT_STEP_FRACTION, POWER_ITERS,
};
use invkit_core::{add_noise, make_operator, ForwardOperator, Image, MeasurementVector, NoiseModel, OperatorSpec};
use invkit_neuralkit::{build_decoder, build_denoiser, checkpoint, DecoderConfig, Network, OptimizerKind};
use serde::{Deserialize, Serialize};

use crate::config::{parse_inverse, Config, ModelConfig, OperatorConfig, RESOLVED_CONFIG};
use crate::error::{CliError, CliResult};
use crate::io::{hstack, read_bytes, read_raw, write_bytes, write_pgm, write_raw};

pub const MEASUREMENT_FILE: &str = "measurement.ivk";
pub const RECONSTRUCTION_FILE: &str = "reconstruction.ivk";
pub const RECONSTRUCTION_PGM: &str = "reconstruction.pgm";
pub const METRICS_CSV: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "model.ivkw";
pub const LOSS_CSV: &str = "loss.csv";
pub const PER_IMAGE_CSV: &str = "per_image.csv";
pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const ROBUSTNESS_CSV: &str = "robustness.csv";
pub const FEATURE_CSV: &str = "feature_mae.csv";
pub const PANEL_DIR: &str = "panels";

// Seed streams derived from the run seed.
const NOISE_STREAM: u64 = 1;
const MODEL_STREAM: u64 = 2;
const TRAIN_STREAM: u64 = 3;
const SOLVER_STREAM: u64 = 4;

fn emit_config(cfg: &Config, out: &Path) -> CliResult<()> {
    write_bytes(&out.join(RESOLVED_CONFIG), cfg.to_toml()?.as_bytes())
}

fn operator(cfg: &OperatorConfig) -> CliResult<ForwardOperator> {
    Ok(make_operator(&cfg.to_spec()?)?)
}

fn measurement(op: &ForwardOperator, img: Image, sigma: f64, path: &Path) -> CliResult<MeasurementVector> {
    if img.len() != op.output_len() {
        return Err(CliError::Config(format!(
            "{} holds {} values but the {} operator produces {}",
            path.display(),
            img.len(),
            op.name(),
            op.output_len()
        )));
    }
    let mut y = MeasurementVector::new(img.into_data(), op.name());
    y.sigma = sigma;
    Ok(y)
}

fn check_dims(img: &Image, op: &ForwardOperator, path: &Path) -> CliResult<()> {
    if img.dims() != op.input_dims() {
        let (h, w) = op.input_dims();
        return Err(CliError::Config(format!("{} is {}x{} but the operator expects {h}x{w}", path.display(), img.height(), img.width())));
    }
    Ok(())
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

/// `y = A(x) + σg` for one input image, written as a one-row raw file.
pub fn simulate(cfg: &Config, out: &Path, input: &Path) -> CliResult<()> {
    emit_config(cfg, out)?;
    let op = operator(&cfg.operator)?;
    let x = read_raw(input)?;
    check_dims(&x, &op, input)?;
    let clean = op.apply(&x)?;
    let noise = NoiseModel { sigma: cfg.operator.noise_sigma, seed: derive_seed(cfg.seed, NOISE_STREAM) };
    let y = add_noise(&clean, &noise)?;
    write_raw(&out.join(MEASUREMENT_FILE), &Image::row(y.data)?)
}

// ---------------------------------------------------------------- trained models

/// Description of a checkpoint, stored next to it with a `.toml` extension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub model: ModelConfig,
    pub regime: TrainingRegime,
    pub height: usize,
    pub width: usize,
    pub operator: OperatorConfig,
    pub parameters: usize,
    pub seed: u64,
    pub epochs: usize,
    pub samples: usize,
    pub final_loss: f64,
    pub dataset: String,
}

pub fn manifest_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("toml")
}

fn residual_model(op: Arc<ForwardOperator>, m: &ModelConfig, seed: u64) -> CliResult<ResidualModel> {
    let body = residual_body(m.channels, m.depth, derive_seed(seed, MODEL_STREAM))?;
    Ok(ResidualModel::new(op, body, parse_inverse(m.inverse.as_deref())?)?)
}

fn unrolled_model(op: Arc<ForwardOperator>, m: &ModelConfig, seed: u64) -> CliResult<UnrolledModel> {
    let mut prox = build_denoiser(m.channels, m.depth, derive_seed(seed, MODEL_STREAM))?;
    prox.zero_last_layer();
    let eta = match m.eta {
        Some(e) => e,
        None => DEFAULT_STEP_FRACTION / estimate_norm_sq(&op, POWER_ITERS, seed)?,
    };
    Ok(UnrolledModel::new(op, prox, m.blocks, eta)?)
}

fn decoder_config(m: &ModelConfig, height: usize, width: usize) -> DecoderConfig {
    DecoderConfig { channels: m.channels, stages: m.stages, height, width, kernel: m.kernel, latent_dim: Some(m.latent_dim) }
}

fn load_checkpoint(path: &Path) -> CliResult<(Manifest, Vec<f64>)> {
    let mpath = manifest_path(path);
    let text = String::from_utf8(read_bytes(&mpath)?).map_err(|e| CliError::io(&mpath, e))?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", mpath.display())))?;
    let values = checkpoint::decode(&read_bytes(path)?).map_err(|e| CliError::io(path, e))?;
    if values.len() != manifest.parameters {
        return Err(CliError::Io(format!("{}: {} values, manifest declares {}", path.display(), values.len(), manifest.parameters)));
    }
    Ok((manifest, values))
}

fn require_kind(manifest: &Manifest, kind: &str, method: &str, path: &Path) -> CliResult<()> {
    if manifest.model.kind != kind {
        return Err(CliError::Config(format!(
            "method {method} needs a {kind} checkpoint, {} holds a {} model",
            path.display(),
            manifest.model.kind
        )));
    }
    Ok(())
}

fn require_dims(manifest: &Manifest, op: &ForwardOperator) -> CliResult<()> {
    if (manifest.height, manifest.width) != op.input_dims() {
        let (h, w) = op.input_dims();
        return Err(CliError::Config(format!("checkpoint images are {}x{}, operator expects {h}x{w}", manifest.height, manifest.width)));
    }
    Ok(())
}

struct LearnedDenoiser(ResidualModel);

impl Denoiser for LearnedDenoiser {
    fn denoise(&self, x: &Image) -> invkit_core::Result<Image> {
        self.0.reconstruct(&MeasurementVector::new(x.data().to_vec(), "identity"))
    }
}

fn checkpoint_arg<'a>(cfg: &'a Config, requirement: &str) -> CliResult<&'a Path> {
    cfg.solver
        .checkpoint
        .as_deref()
        .map(Path::new)
        .ok_or_else(|| CliError::Config(format!("method {} requires solver.checkpoint: {requirement}", cfg.solver.method)))
}

fn denoiser(cfg: &Config, h: usize, w: usize) -> CliResult<Box<dyn Denoiser>> {
    match cfg.solver.checkpoint.as_deref() {
        None => Ok(Box::new(ProxDenoiser { reg: cfg.regularizer.to_regularizer()?, step: 1.0 })),
        Some(p) => {
            let path = Path::new(p);
            let (manifest, values) = load_checkpoint(path)?;
            require_kind(&manifest, "residual", &cfg.solver.method, path)?;
            let id = Arc::new(make_operator(&OperatorSpec::Identity { height: h, width: w })?);
            let mut model = residual_model(id, &manifest.model, manifest.seed)?;
            model.load_flat(&values)?;
            Ok(Box::new(LearnedDenoiser(model)))
        }
    }
}

fn reconstruct_image(cfg: &Config, op: Arc<ForwardOperator>, y: &MeasurementVector) -> CliResult<Image> {
    let s = &cfg.solver;
    let scfg = SolveConfig { step_size: s.step_size, max_iters: s.max_iters, tol: s.tol, seed: derive_seed(cfg.seed, SOLVER_STREAM) };
    let (h, w) = op.input_dims();
    let image = match s.method.as_str() {
        "baseline" => parse_inverse(s.inverse.as_deref())?.apply(&op, y)?,
        "ml_least_squares" => ml_least_squares(&op, y, s.lambda, &scfg)?.reconstruction,
        "prox_gradient" => prox_gradient(&op, y, &cfg.regularizer.to_regularizer()?, &scfg)?.reconstruction,
        "admm" => admm(&op, y, &cfg.regularizer.to_regularizer()?, s.rho, &scfg)?.reconstruction,
        "pnp" => pnp_admm(&op, y, denoiser(cfg, h, w)?.as_ref(), s.rho, &scfg)?.reconstruction,
        "red" => red_solve(&op, y, denoiser(cfg, h, w)?.as_ref(), s.lambda, &scfg)?.reconstruction,
        "phase_retrieval" => phase_retrieval_gd(&op, y, s.restarts, &scfg)?.reconstruction,
        "dip" => {
            let mut dcfg = DipConfig {
                checkpoint_every: 0,
                optimizer: OptimizerKind::adam(s.lr),
                ..DipConfig::new(h, w, s.iterations, derive_seed(cfg.seed, SOLVER_STREAM))
            };
            // small images get fewer upsampling stages
            while dcfg.decoder.stages > 0 && (h % (1 << dcfg.decoder.stages) != 0 || w % (1 << dcfg.decoder.stages) != 0) {
                dcfg.decoder.stages -= 1;
            }
            dip_reconstruct(&op, y, &dcfg)?.plateau_image
        }
        "residual" | "unrolled" => {
            let path = checkpoint_arg(cfg, "a model trained with known operator on paired or clean data")?;
            let (manifest, values) = load_checkpoint(path)?;
            require_kind(&manifest, &s.method, &s.method, path)?;
            require_dims(&manifest, &op)?;
            if s.method == "residual" {
                let mut m = residual_model(op, &manifest.model, manifest.seed)?;
                m.load_flat(&values)?;
                m.reconstruct(y)?
            } else {
                let mut m = unrolled_model(op, &manifest.model, manifest.seed)?;
                m.load_flat(&values)?;
                m.reconstruct(y)?
            }
        }
        "csgm" => {
            let path = checkpoint_arg(cfg, "a generator trained on clean images (known_test_only x x_only)")?;
            let (manifest, values) = load_checkpoint(path)?;
            require_kind(&manifest, "generator", "csgm", path)?;
            require_dims(&manifest, &op)?;
            let g = load_generator(&manifest, &values)?;
            let ccfg = CsgmConfig {
                restarts: s.restarts,
                steps: s.iterations,
                optimizer: LatentOptimizer::Adam { lr: s.lr },
                seed: derive_seed(cfg.seed, SOLVER_STREAM),
            };
            csgm_recover(&g, &op, y, &ccfg)?.x
        }
        other => {
            return Err(CliError::Config(format!(
                "solver.method `{other}` (expected baseline, ml_least_squares, prox_gradient, admm, pnp, red, phase_retrieval, dip, residual, unrolled or csgm)"
            )))
        }
    };
    if image.data().iter().any(|v| !v.is_finite()) {
        return Err(CliError::Numerical(format!("{} produced non-finite values", s.method)));
    }
    Ok(image)
}

fn load_generator(manifest: &Manifest, values: &[f64]) -> CliResult<Generator> {
    let m = &manifest.model;
    let mut net: Network = build_decoder(&decoder_config(m, manifest.height, manifest.width), 0)?;
    net.load_flat(values)?;
    let provenance = Provenance {
        method: "deterministic_autoencoder".into(),
        latent_dim: m.latent_dim,
        dataset_id: manifest.dataset.clone(),
        seed: manifest.seed,
    };
    Ok(Generator::from_network(net, m.latent_dim, manifest.height, manifest.width, provenance)?)
}

/// Reconstructs one measurement; with `truth`, also writes PSNR/SSIM.
pub fn reconstruct(cfg: &Config, out: &Path, measurement_path: &Path, truth: Option<&Path>) -> CliResult<()> {
    emit_config(cfg, out)?;
    let op = Arc::new(operator(&cfg.operator)?);
    let y = measurement(&op, read_raw(measurement_path)?, cfg.operator.noise_sigma, measurement_path)?;
    let x = truth.map(|p| read_raw(p).and_then(|x| check_dims(&x, &op, p).map(|_| x))).transpose()?;
    let rec = reconstruct_image(cfg, Arc::clone(&op), &y)?;
    write_raw(&out.join(RECONSTRUCTION_FILE), &rec)?;
    if cfg.output.pgm {
        write_pgm(&out.join(RECONSTRUCTION_PGM), &rec)?;
    }
    if let Some(x) = x {
        let p = psnr(&x, &rec, 1.0)?;
        let s = ssim(&x, &rec).ok().map(|v| format!("{v:.6}")).unwrap_or_default();
        let row = vec![cfg.solver.method.clone(), p.to_string(), s, format!("{:.6e}", mse(&x, &rec)?)];
        write_bytes(&out.join(METRICS_CSV), &csv_bytes(&["method", "psnr_db", "ssim", "mse"], &[row])?)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- training

#[derive(Default)]
struct Dataset {
    x: BTreeMap<String, Image>,
    y: BTreeMap<String, Image>,
    xt: BTreeMap<String, Image>,
}

/// Reads `x_<id>.ivk` (clean), `y_<id>.ivk` (measured) and `xt_<id>.ivk`
/// (independent noisy copies); other files are ignored.
fn load_dataset(dir: &Path) -> CliResult<Dataset> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut names = Vec::new();
    for e in entries {
        let e = e.map_err(|e| CliError::io(dir, e))?;
        if let Some(name) = e.file_name().to_str() {
            names.push(name.to_owned());
        }
    }
    names.sort();
    let mut ds = Dataset::default();
    for name in names {
        let Some(stem) = name.strip_suffix(".ivk") else { continue };
        let (map, id) = if let Some(id) = stem.strip_prefix("xt_") {
            (&mut ds.xt, id)
        } else if let Some(id) = stem.strip_prefix("x_") {
            (&mut ds.x, id)
        } else if let Some(id) = stem.strip_prefix("y_") {
            (&mut ds.y, id)
        } else {
            continue;
        };
        map.insert(id.to_owned(), read_raw(&dir.join(&name))?);
    }
    Ok(ds)
}

fn require_files(map: &BTreeMap<String, Image>, prefix: &str, regime: TrainingRegime) -> CliResult<()> {
    if map.is_empty() {
        return Err(CliError::Config(format!("regime {} needs {prefix}_<id>.ivk files in the dataset directory", regime.name())));
    }
    Ok(())
}

fn matched<'a>(
    a: &'a BTreeMap<String, Image>,
    b: &'a BTreeMap<String, Image>,
    names: (&str, &str),
    regime: TrainingRegime,
) -> CliResult<Vec<(&'a Image, &'a Image)>> {
    require_files(a, names.0, regime)?;
    a.iter()
        .map(|(id, ia)| {
            b.get(id).map(|ib| (ia, ib)).ok_or_else(|| {
                CliError::Config(format!("regime {}: {}_{id}.ivk has no matching {}_{id}.ivk", regime.name(), names.0, names.1))
            })
        })
        .collect()
}

fn check_model_regime(kind: &str, regime: TrainingRegime) -> CliResult<()> {
    let ok = match kind {
        "residual" => regime != TrainingRegime::Untrained,
        "unrolled" => matches!(regime, TrainingRegime::PairedXy | TrainingRegime::XOnly),
        "generator" => regime == TrainingRegime::XOnly,
        other => return Err(CliError::Config(format!("model.kind `{other}` (expected residual, unrolled or generator)"))),
    };
    if !ok {
        return Err(CliError::Config(format!("model {kind} cannot be trained in regime {}", regime.name())));
    }
    Ok(())
}

/// Trains the configured model on a dataset directory and writes its
/// checkpoint, manifest and per-epoch loss.
pub fn train(cfg: &Config, out: &Path, dataset_dir: &Path) -> CliResult<()> {
    emit_config(cfg, out)?;
    let t = &cfg.training;
    let regime = t.regime;
    check_model_regime(&cfg.model.kind, regime)?;
    if regime.needs_sigma() && t.sigma.is_none() {
        return Err(CliError::Config(format!("regime {} requires training.sigma", regime.name())));
    }
    if !(t.lr > 0.0) || !t.lr.is_finite() {
        return Err(CliError::Config(format!("training.lr must be > 0, got {}", t.lr)));
    }
    let op = Arc::new(operator(&cfg.operator)?);
    let (h, w) = op.input_dims();
    let ds = load_dataset(dataset_dir)?;
    let tcfg = TrainConfig { optimizer: OptimizerKind::adam(t.lr), epochs: t.epochs, batch_size: t.batch_size, seed: derive_seed(cfg.seed, TRAIN_STREAM) };
    let sigma = cfg.operator.noise_sigma;
    let as_y = |img: &Image, id: &str| measurement(&op, img.clone(), sigma, &dataset_dir.join(format!("y_{id}.ivk")));
    let check_x = |img: &Image, id: &str| check_dims(img, &op, &dataset_dir.join(format!("x_{id}.ivk")));

    let pairs: Vec<TrainingPair> = match regime {
        TrainingRegime::PairedXy => matched(&ds.y, &ds.x, ("y", "x"), regime)?
            .into_iter()
            .zip(ds.y.keys())
            .map(|((y, x), id)| {
                check_x(x, id)?;
                Ok(TrainingPair { y: as_y(y, id)?, target: x.clone() })
            })
            .collect::<CliResult<Vec<_>>>()?,
        TrainingRegime::XOnly if cfg.model.kind != "generator" => {
            require_files(&ds.x, "x", regime)?;
            let mut v = Vec::new();
            for (i, (id, x)) in ds.x.iter().enumerate() {
                check_x(x, id)?;
                let noise = NoiseModel { sigma, seed: derive_seed(derive_seed(cfg.seed, NOISE_STREAM), i as u64) };
                v.push(TrainingPair { y: add_noise(&op.apply(x)?, &noise)?, target: x.clone() });
            }
            v
        }
        TrainingRegime::Noise2Noise => {
            let sigma_train = t.sigma.unwrap_or(sigma);
            let mut v = Vec::new();
            for (y, xt) in matched(&ds.y, &ds.xt, ("y", "xt"), regime)? {
                v.push(TrainingPair { y: measurement(&op, y.clone(), sigma_train, dataset_dir)?, target: xt.clone() });
            }
            v
        }
        _ => Vec::new(),
    };

    let (flat, report, model_cfg): (Vec<f64>, TrainReport, ModelConfig) = match cfg.model.kind.as_str() {
        "generator" => {
            require_files(&ds.x, "x", regime)?;
            let xs: Vec<Image> = ds.x.values().cloned().collect();
            for (id, x) in &ds.x {
                if x.dims() != xs[0].dims() {
                    return Err(CliError::Config(format!("x_{id}.ivk dims differ from the rest of the dataset")));
                }
            }
            let m = &cfg.model;
            let gcfg = GeneratorConfig { channels: m.channels, stages: m.stages, kernel: m.kernel, train: tcfg, dataset_id: dataset_name(dataset_dir) };
            let (g, report) = train_generator(&xs, m.latent_dim, &gcfg)?;
            (g.decoder.flat_params(), report, m.clone())
        }
        "unrolled" => {
            let mut model = unrolled_model(Arc::clone(&op), &cfg.model, cfg.seed)?;
            let resolved = ModelConfig { eta: Some(model.eta()), ..cfg.model.clone() };
            let report = train_supervised(&mut model, &pairs, &tcfg)?;
            (model.flat_params(), report, resolved)
        }
        _ => {
            let mut model = residual_model(Arc::clone(&op), &cfg.model, cfg.seed)?;
            let report = match regime {
                TrainingRegime::YOnlySure | TrainingRegime::YOnlyGsure => {
                    require_files(&ds.y, "y", regime)?;
                    let ys = ds.y.iter().map(|(id, y)| as_y(y, id)).collect::<CliResult<Vec<_>>>()?;
                    let sigma = t.sigma.unwrap_or(0.0);
                    let loss = if regime == TrainingRegime::YOnlySure {
                        SelfSupervisedLoss::Sure { sigma, probes: t.probes, eps: t.probe_eps }
                    } else {
                        SelfSupervisedLoss::Gsure { op: Arc::clone(&op), sigma, probes: t.probes, eps: t.probe_eps }
                    };
                    train_self_supervised(&mut model, &ys, &loss, &tcfg)?
                }
                TrainingRegime::Noise2Noise => train_noise2noise(&mut model, &pairs, &tcfg)?,
                _ => train_supervised(&mut model, &pairs, &tcfg)?,
            };
            (model.flat_params(), report, cfg.model.clone())
        }
    };

    let manifest = Manifest {
        model: model_cfg,
        regime,
        height: h,
        width: w,
        operator: cfg.operator.clone(),
        parameters: flat.len(),
        seed: cfg.seed,
        epochs: t.epochs,
        samples: report.samples,
        final_loss: report.loss_trace.last().copied().unwrap_or(f64::NAN),
        dataset: dataset_name(dataset_dir),
    };
    let ckpt = out.join(CHECKPOINT_FILE);
    write_bytes(&ckpt, &checkpoint::encode(&flat))?;
    let text = toml::to_string(&manifest).map_err(|e| CliError::Config(format!("cannot serialize manifest: {e}")))?;
    write_bytes(&manifest_path(&ckpt), text.as_bytes())?;
    let rows: Vec<Vec<String>> = report.loss_trace.iter().enumerate().map(|(e, l)| vec![(e + 1).to_string(), l.to_string()]).collect();
    write_bytes(&out.join(LOSS_CSV), &csv_bytes(&["epoch", "loss"], &rows)?)
}

fn dataset_name(dir: &Path) -> String {
    dir.file_name().and_then(|n| n.to_str()).unwrap_or("dataset").to_owned()
}

// ---------------------------------------------------------------- benchmark

fn file_label(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

fn write_benchmark(cfg: &Config, out: &Path, reports: &[Report], suites: &[RobustnessReport]) -> CliResult<()> {
    let mut all: Vec<&Report> = reports.iter().collect();
    for s in suites {
        all.extend(s.reports());
    }
    let mut buf = Vec::new();
    write_image_csv(&all, &mut buf)?;
    write_bytes(&out.join(PER_IMAGE_CSV), &buf)?;
    let mut buf = Vec::new();
    write_aggregate_csv(&all, &mut buf)?;
    write_bytes(&out.join(AGGREGATE_CSV), &buf)?;
    if !suites.is_empty() {
        let mut buf = Vec::new();
        for (k, s) in suites.iter().enumerate() {
            let mut one = Vec::new();
            write_robustness_csv(s, &mut one)?;
            let skip = if k == 0 { 0 } else { one.iter().position(|&b| b == b'\n').map_or(one.len(), |p| p + 1) };
            buf.extend_from_slice(&one[skip..]);
        }
        write_bytes(&out.join(ROBUSTNESS_CSV), &buf)?;
    }
    let mut feature_rows = Vec::new();
    for r in &all {
        if let Some(mae) = &r.feature_mae {
            for (row, v) in r.rows.iter().zip(mae) {
                feature_rows.push(vec![r.scenario_id.clone(), r.method.clone(), row.image_id.to_string(), format!("{v:.6}")]);
            }
        }
    }
    if !feature_rows.is_empty() {
        write_bytes(&out.join(FEATURE_CSV), &csv_bytes(&["scenario_id", "method", "image_id", "feature_mae"], &feature_rows)?)?;
    }
    if cfg.output.pgm {
        for r in &all {
            for p in r.panels.iter().take(cfg.output.max_panels) {
                let stem = format!("{}_img{:03}", file_label(&r.scenario_id), p.image_id);
                let panel = hstack(&[&p.truth, &p.backprojection, &p.reconstruction]);
                write_pgm(&out.join(PANEL_DIR).join(format!("{stem}.pgm")), &panel)?;
                write_pgm(&out.join(PANEL_DIR).join(format!("{stem}_error.pgm")), &p.error)?;
            }
        }
    }
    Ok(())
}

/// Runs every scenario and robustness suite in order. Results gathered
/// before a failure are still written.
pub fn benchmark(cfg: &Config, out: &Path) -> CliResult<()> {
    let sc = &cfg.scenario;
    if sc.runs.is_empty() && sc.robustness.is_empty() {
        return Err(CliError::Config("scenario list is empty: add [[scenario.runs]] or [[scenario.robustness]]".into()));
    }
    let runs = sc.runs.iter().map(|s| s.to_scenario()).collect::<CliResult<Vec<_>>>()?;
    let suites = sc.robustness.iter().map(|r| Ok((r.base.to_scenario()?, r.perturbations.clone()))).collect::<CliResult<Vec<_>>>()?;
    for s in runs.iter().chain(suites.iter().map(|(b, _)| b)) {
        s.validate()?;
    }
    emit_config(cfg, out)?;
    let mut reports = Vec::new();
    let mut done = Vec::new();
    let mut failure = None;
    for s in &runs {
        match run_scenario(s) {
            Ok(r) => reports.push(r),
            Err(e) => {
                failure = Some(CliError::from(e));
                break;
            }
        }
    }
    if failure.is_none() {
        for (base, perts) in &suites {
            match robustness_suite(base, perts) {
                Ok(r) => done.push(r),
                Err(e) => {
                    failure = Some(CliError::from(e));
                    break;
                }
            }
        }
    }
    write_benchmark(cfg, out, &reports, &done)?;
    failure.map_or(Ok(()), Err)
}
