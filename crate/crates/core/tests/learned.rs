use std::sync::Arc;

use invkit_core::learned::{
    csgm_measurement_sweep, csgm_recover, dip_reconstruct, divergence, gsure_loss, noise2noise_targets, residual_body, sure_loss,
    train_generator, train_noise2noise, train_supervised, ApproxInverse, CsgmConfig, DipConfig, DivergenceMode, Generator,
    GeneratorConfig, LatentOptimizer, Pseudoinverse, Reconstructor, ResidualModel, TrainConfig, TrainingPair, UnrolledModel,
};
use invkit_core::operators::{random_mask, Ensemble, Kernel};
use invkit_core::solvers::{prox_gradient, SolveConfig};
use invkit_core::{make_operator, ForwardOperator, Image, InvError, MeasurementVector, OperatorSpec, Regularizer, Result};
use invkit_neuralkit::{build_denoiser, OptimizerKind, Tape, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gauss(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    num / dot(b, b).sqrt().max(1e-300)
}

fn blur(h: usize, w: usize) -> ForwardOperator {
    make_operator(&OperatorSpec::Convolution { height: h, width: w, kernel: Kernel::gaussian(5, 1.0).unwrap() }).unwrap()
}

fn identity(h: usize, w: usize) -> ForwardOperator {
    make_operator(&OperatorSpec::Identity { height: h, width: w }).unwrap()
}

fn zeroed_prox(seed: u64) -> invkit_neuralkit::Network {
    let mut n = build_denoiser(4, 2, seed).unwrap();
    n.zero_last_layer();
    n
}

fn measure(op: &ForwardOperator, x: &[f64]) -> MeasurementVector {
    MeasurementVector::new(op.forward(x).unwrap(), op.name())
}

// ---------------------------------------------------------------- unrolled

#[test]
fn unrolled_with_identity_prox_reproduces_gradient_descent() {
    let op = Arc::new(blur(10, 12));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let y = measure(&op, &uniform(&mut rng, op.input_len()));
    for blocks in [1, 4, 7] {
        let model = UnrolledModel::new(Arc::clone(&op), zeroed_prox(blocks as u64), blocks, 0.8).unwrap();
        let out = model.reconstruct(&y).unwrap();
        let cfg = SolveConfig { step_size: Some(model.eta()), max_iters: blocks, tol: 0.0, seed: 0 };
        let pg = prox_gradient(&op, &y, &Regularizer::Zero, &cfg).unwrap();
        assert_eq!(pg.iterations_run, blocks);
        assert_eq!(out.data(), pg.reconstruction.data());
    }
}

#[test]
fn one_unit_step_on_identity_returns_measurement() {
    let op = Arc::new(identity(5, 4));
    let model = UnrolledModel::new(op, zeroed_prox(0), 1, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let y = MeasurementVector::new(gauss(&mut rng, 20), "identity");
    assert_eq!(model.reconstruct(&y).unwrap().data(), y.data.as_slice());
}

fn unrolled_loss(model: &UnrolledModel, y: &[f64], target: &[f64]) -> (f64, f64) {
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let out = model.record(&mut tape, &vars, y).unwrap();
    let t = tape.constant(tape.shape(out).to_vec(), target.to_vec());
    let d = tape.sub(out, t).unwrap();
    let l = tape.sum_squares(d).unwrap();
    let grads = tape.backward(l, &[1.0]).unwrap();
    let g_log = grads.get(*vars.last().unwrap()).unwrap()[0];
    (tape.value(l)[0], g_log)
}

#[test]
fn step_size_gradient_matches_finite_differences() {
    let op = Arc::new(blur(8, 8));
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let y = measure(&op, &uniform(&mut rng, 64));
    let target = uniform(&mut rng, 64);
    for (seed, eta) in [(1u64, 0.3), (2, 0.7), (3, 1.1)] {
        let mut model = UnrolledModel::new(Arc::clone(&op), build_denoiser(3, 2, seed).unwrap(), 3, eta).unwrap();
        let (_, g_log) = unrolled_loss(&model, &y.data, &target);
        // chain rule through the log parametrization
        let analytic = g_log / eta;
        let h = 1e-6;
        model.log_eta = Tensor::scalar((eta + h).ln()).with_grad();
        let (lp, _) = unrolled_loss(&model, &y.data, &target);
        model.log_eta = Tensor::scalar((eta - h).ln()).with_grad();
        let (lm, _) = unrolled_loss(&model, &y.data, &target);
        let numeric = (lp - lm) / (2.0 * h);
        let rel = (analytic - numeric).abs() / numeric.abs().max(1e-8);
        assert!(rel <= 1e-4, "eta {eta}: analytic {analytic} numeric {numeric}");
    }
}

// ---------------------------------------------------------------- residual

#[test]
fn residual_with_silent_body_is_the_approximate_inverse() {
    let op = Arc::new(blur(9, 9));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let y = measure(&op, &uniform(&mut rng, 81));
    for inv in [ApproxInverse::Adjoint, ApproxInverse::Pseudoinverse { lambda: 1e-2 }] {
        let mut body = residual_body(4, 3, 7).unwrap();
        body.zero_last_layer();
        let model = ResidualModel::new(Arc::clone(&op), body, inv).unwrap();
        let expect = inv.apply(&op, &y).unwrap();
        assert_eq!(model.reconstruct(&y).unwrap(), expect);
    }
}

#[test]
fn approximate_inverses_are_linear() {
    let op = blur(8, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (u, v) = (gauss(&mut rng, 80), gauss(&mut rng, 80));
    let (a, b) = (1.7, -0.4);
    let combo: Vec<f64> = u.iter().zip(&v).map(|(p, q)| a * p + b * q).collect();
    for inv in [ApproxInverse::Adjoint, ApproxInverse::Pseudoinverse { lambda: 1e-2 }] {
        let lhs = inv.apply_vec(&op, &combo).unwrap();
        let (iu, iv) = (inv.apply_vec(&op, &u).unwrap(), inv.apply_vec(&op, &v).unwrap());
        let rhs: Vec<f64> = iu.iter().zip(&iv).map(|(p, q)| a * p + b * q).collect();
        assert!(rel_err(&lhs, &rhs) < 1e-8, "{inv:?}");
    }
    // the regularized pseudoinverse of a symmetric blur is itself symmetric
    let pinv = ApproxInverse::Pseudoinverse { lambda: 1e-2 };
    let l = dot(&pinv.apply_vec(&op, &u).unwrap(), &v);
    let r = dot(&u, &pinv.apply_vec(&op, &v).unwrap());
    assert!((l - r).abs() <= 1e-8 * l.abs().max(r.abs()));
}

fn denoising_pairs(h: usize, w: usize, count: usize, sigma: f64, seed: u64) -> Vec<TrainingPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let x = uniform(&mut rng, h * w);
            let y: Vec<f64> = x.iter().map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
            TrainingPair { y: MeasurementVector::new(y, "identity"), target: Image::new(h, w, x).unwrap() }
        })
        .collect()
}

fn small_residual(h: usize, w: usize, seed: u64) -> ResidualModel {
    ResidualModel::new(Arc::new(identity(h, w)), residual_body(4, 2, seed).unwrap(), ApproxInverse::Identity).unwrap()
}

#[test]
fn supervised_training_memorizes_an_identity_task() {
    // y = x: the body only has to learn to output zero
    let pairs: Vec<TrainingPair> = denoising_pairs(6, 6, 8, 0.0, 1);
    let mut model = small_residual(6, 6, 2);
    let cfg = TrainConfig { optimizer: OptimizerKind::adam(1e-2), epochs: 150, batch_size: 8, seed: 3 };
    let report = train_supervised(&mut model, &pairs, &cfg).unwrap();
    let last = *report.loss_trace.last().unwrap();
    assert!(last < 1e-4, "final loss {last}");
    assert!(last < report.loss_trace[0]);
}

#[test]
fn training_is_reproducible() {
    let pairs = denoising_pairs(6, 6, 12, 0.1, 8);
    let cfg = TrainConfig { optimizer: OptimizerKind::adam(3e-3), epochs: 4, batch_size: 5, seed: 11 };
    let mut a = small_residual(6, 6, 4);
    let mut b = small_residual(6, 6, 4);
    let ra = train_supervised(&mut a, &pairs, &cfg).unwrap();
    let rb = train_supervised(&mut b, &pairs, &cfg).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(a.flat_params(), b.flat_params());
}

#[test]
fn noiseless_targets_make_noise2noise_supervised() {
    let pairs = denoising_pairs(6, 6, 10, 0.1, 12);
    let clean: Vec<Image> = pairs.iter().map(|p| p.target.clone()).collect();
    let targets = noise2noise_targets(&clean, 0.0, 5).unwrap();
    assert_eq!(targets, clean);
    let cfg = TrainConfig { optimizer: OptimizerKind::adam(3e-3), epochs: 3, batch_size: 4, seed: 2 };
    let mut sup = small_residual(6, 6, 6);
    let mut n2n = small_residual(6, 6, 6);
    train_supervised(&mut sup, &pairs, &cfg).unwrap();
    train_noise2noise(&mut n2n, &pairs, &cfg).unwrap();
    assert_eq!(sup.flat_params(), n2n.flat_params());
}

/// `f(y) = w·y` on single-pixel images.
struct Scalar {
    w: Tensor,
}

impl Reconstructor for Scalar {
    fn image_dims(&self) -> (usize, usize) {
        (1, 1)
    }
    fn params(&self) -> Vec<&Tensor> {
        vec![&self.w]
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w]
    }
    fn prepare(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(y.to_vec())
    }
    fn record(&self, tape: &mut Tape, params: &[Var], input: &[f64]) -> Result<Var> {
        let x = tape.constant(vec![1, 1, 1], input.to_vec());
        tape.scale_by(x, params[0]).map_err(InvError::from)
    }
}

#[test]
fn noise2noise_scalar_regression_matches_supervised() {
    let (count, sigma) = (10_000, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let clean: Vec<Image> = (0..count).map(|_| Image::new(1, 1, uniform(&mut rng, 1)).unwrap()).collect();
    let ys: Vec<f64> = clean.iter().map(|x| x.data()[0] + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    let noisy = noise2noise_targets(&clean, sigma, 78).unwrap();
    let pairs = |targets: &[Image]| -> Vec<TrainingPair> {
        ys.iter().zip(targets).map(|(&y, t)| TrainingPair { y: MeasurementVector::new(vec![y], "identity"), target: t.clone() }).collect()
    };
    let cfg = TrainConfig { optimizer: OptimizerKind::Sgd { lr: 1.0 }, epochs: 40, batch_size: count, seed: 0 };
    let mut sup = Scalar { w: Tensor::scalar(0.0).with_grad() };
    let mut n2n = Scalar { w: Tensor::scalar(0.0).with_grad() };
    train_supervised(&mut sup, &pairs(&clean), &cfg).unwrap();
    train_noise2noise(&mut n2n, &pairs(&noisy), &cfg).unwrap();

    // closed-form least squares for both objectives
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    let w_sup = ys.iter().zip(&clean).map(|(y, x)| y * x.data()[0]).sum::<f64>() / syy;
    let w_n2n = ys.iter().zip(&noisy).map(|(y, t)| y * t.data()[0]).sum::<f64>() / syy;
    let (ws, wn) = (sup.w.data[0], n2n.w.data[0]);
    assert!((ws - w_sup).abs() < 1e-6, "{ws} vs {w_sup}");
    assert!((wn - w_n2n).abs() < 1e-6, "{wn} vs {w_n2n}");
    assert!((wn - ws).abs() / ws.abs() <= 0.05, "{wn} vs {ws}");
}

// ---------------------------------------------------------------- risk estimates

fn shrink(c: f64) -> impl Fn(&[f64]) -> Result<Vec<f64>> {
    move |y: &[f64]| Ok(y.iter().map(|v| c * v).collect())
}

#[test]
fn sure_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let y = gauss(&mut rng, 50);
    let sigma = 0.4;
    let n = y.len() as f64;
    let id = sure_loss(&shrink(1.0), &y, sigma, DivergenceMode::ExactLinear).unwrap();
    assert!((id - sigma * sigma).abs() < 1e-12);
    let zero = sure_loss(&shrink(0.0), &y, sigma, DivergenceMode::ExactLinear).unwrap();
    assert!((zero - (dot(&y, &y) / n - sigma * sigma)).abs() < 1e-12);
}

#[test]
fn sure_is_unbiased_for_a_shrinkage_denoiser() {
    let (n, sigma, c, draws) = (16, 0.5, 0.7, 4000);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = uniform(&mut rng, n);
    let f = shrink(c);
    let mut diffs = Vec::with_capacity(draws);
    for _ in 0..draws {
        let y: Vec<f64> = x.iter().map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
        let est = sure_loss(&f, &y, sigma, DivergenceMode::ExactLinear).unwrap();
        let fy = f(&y).unwrap();
        let risk = x.iter().zip(&fy).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64;
        diffs.push(est - risk);
    }
    let mean = diffs.iter().sum::<f64>() / draws as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
    let se = (var / draws as f64).sqrt();
    assert!(mean.abs() <= 3.0 * se, "bias {mean} vs se {se}");
}

#[test]
fn monte_carlo_divergence_tracks_the_trace() {
    // W = (I + B)/2 with a symmetric blur B; its trace is exact from the kernel center
    let (h, w) = (16, 16);
    let op = blur(h, w);
    let f = |y: &[f64]| -> Result<Vec<f64>> {
        let b = op.forward(y)?;
        Ok(y.iter().zip(&b).map(|(p, q)| 0.5 * p + 0.5 * q).collect())
    };
    let exact = divergence(&f, &vec![0.0; h * w], DivergenceMode::ExactLinear).unwrap();
    let center = Kernel::gaussian(5, 1.0).unwrap();
    let trace = (h * w) as f64 * (0.5 + 0.5 * center.values[12]);
    assert!((exact - trace).abs() < 1e-9 * trace, "{exact} vs {trace}");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let y = gauss(&mut rng, h * w);
    let mc = divergence(&f, &y, DivergenceMode::MonteCarlo { probes: 100, eps: 1e-3, seed: 17 }).unwrap();
    assert!((mc - trace).abs() <= 0.02 * trace, "{mc} vs {trace}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn gsure_reduces_to_sure_for_denoising(seed in any::<u64>(), a in 0.1f64..2.0, b in -1.0f64..1.0, sigma in 0.05f64..1.0) {
        let op = identity(4, 5);
        let pinv = Pseudoinverse::new(&op).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = gauss(&mut rng, 20);
        let f = move |v: &[f64]| -> Result<Vec<f64>> { Ok(v.iter().map(|t| a * (b * t).tanh() + 0.3 * t * t).collect()) };
        let mode = DivergenceMode::MonteCarlo { probes: 3, eps: 1e-4, seed };
        let s = sure_loss(&f, &y, sigma, mode).unwrap();
        let g = gsure_loss(&f, &y, sigma, &pinv, mode).unwrap().value;
        let n = y.len() as f64;
        prop_assert!((g - (s - dot(&y, &y) / n + sigma * sigma)).abs() <= 1e-8);
    }

    #[test]
    fn projector_is_idempotent(seed in any::<u64>()) {
        let op = make_operator(&OperatorSpec::Compressive { height: 8, width: 8, m: 20, seed, ensemble: Ensemble::Gaussian }).unwrap();
        let pinv = Pseudoinverse::new(&op).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let x = gauss(&mut rng, 64);
        let px = pinv.project(&x).unwrap();
        let ppx = pinv.project(&px).unwrap();
        prop_assert!(rel_err(&ppx, &px) <= 1e-8);
    }
}

#[test]
fn gsure_minimizer_matches_supervised_on_inpainting() {
    // family f_θ(y) = θ·Aᵀy; the summed GSURE is quadratic in θ
    let (h, w, sigma, count) = (12, 12, 0.1, 200);
    let op = make_operator(&OperatorSpec::Subsample { height: h, width: w, mask: random_mask(h, w, 0.5, 3) }).unwrap();
    let pinv = Pseudoinverse::new(&op).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let x = uniform(&mut rng, h * w);
        let y: Vec<f64> = op.forward(&x).unwrap().iter().map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
        samples.push((x, y));
    }
    let total = |theta: f64| -> f64 {
        let f = |v: &[f64]| -> Result<Vec<f64>> { Ok(op.transpose(v)?.iter().map(|t| theta * t).collect()) };
        samples.iter().map(|(_, y)| gsure_loss(&f, y, sigma, &pinv, DivergenceMode::ExactLinear).unwrap().value).sum()
    };
    let (g0, g1, g2) = (total(0.0), total(1.0), total(2.0));
    let curvature = (g2 - 2.0 * g1 + g0) / 2.0;
    let linear = g1 - g0 - curvature;
    let theta_gsure = -linear / (2.0 * curvature);
    // supervised risk restricted to observed pixels
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in &samples {
        num += dot(&op.forward(x).unwrap(), y);
        den += dot(y, y);
    }
    let theta_sup = num / den;
    assert!((theta_gsure - theta_sup).abs() <= 0.05 * theta_sup, "{theta_gsure} vs {theta_sup}");
}

// ---------------------------------------------------------------- generative prior

fn linear_generator(n_side: usize, k: usize, seed: u64) -> Generator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_side * n_side;
    let matrix: Vec<f64> = gauss(&mut rng, n * k).iter().map(|v| v / (n as f64).sqrt()).collect();
    Generator::linear(&matrix, k, n_side, n_side).unwrap()
}

fn backtracking(seed: u64) -> CsgmConfig {
    CsgmConfig { restarts: 3, steps: 200, optimizer: LatentOptimizer::Backtracking { initial_step: 1.0 }, seed }
}

#[test]
fn trained_generator_shapes_and_determinism() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let xs: Vec<Image> = (0..6).map(|_| Image::new(8, 8, uniform(&mut rng, 64)).unwrap()).collect();
    let cfg = GeneratorConfig {
        train: TrainConfig { optimizer: OptimizerKind::adam(3e-3), epochs: 2, batch_size: 3, seed: 5 },
        ..GeneratorConfig::default()
    };
    let (g, report) = train_generator(&xs, 4, &cfg).unwrap();
    let (g2, report2) = train_generator(&xs, 4, &cfg).unwrap();
    assert_eq!(report, report2);
    assert_eq!(g.decoder.flat_params(), g2.decoder.flat_params());
    assert_eq!(g.latent_dim(), 4);
    let out = g.generate(&[0.0; 4]).unwrap();
    assert_eq!(out.dims(), (8, 8));
    assert!(g.generate(&[0.0; 3]).is_err());
    assert!(train_generator(&xs, 17, &cfg).is_err());
    assert_eq!(g.provenance.seed, 5);
}

#[test]
fn planted_latent_is_recovered_from_full_measurements() {
    let g = linear_generator(10, 5, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xs = g.generate(&gauss(&mut rng, 5)).unwrap();
    let op = identity(10, 10);
    let r = csgm_recover(&g, &op, &op.apply(&xs).unwrap(), &backtracking(3)).unwrap();
    assert!(rel_err(r.x.data(), xs.data()) <= 1e-3);
    assert!(r.restarts.iter().all(|o| r.loss <= o.initial_objective));
}

#[test]
fn planted_latent_is_recovered_from_compressive_measurements() {
    let g = linear_generator(10, 5, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xs = g.generate(&gauss(&mut rng, 5)).unwrap();
    let op = make_operator(&OperatorSpec::Compressive { height: 10, width: 10, m: 20, seed: 6, ensemble: Ensemble::Gaussian }).unwrap();
    let r = csgm_recover(&g, &op, &op.apply(&xs).unwrap(), &backtracking(7)).unwrap();
    assert!(rel_err(r.x.data(), xs.data()) <= 1e-2);
}

#[test]
fn zero_weight_generator_returns_its_bias() {
    let g = Generator::linear(&vec![0.0; 16 * 2], 2, 4, 4).unwrap();
    let op = identity(4, 4);
    let y = MeasurementVector::new((0..16).map(|k| k as f64).collect(), "identity");
    let r = csgm_recover(&g, &op, &y, &CsgmConfig::default()).unwrap();
    assert_eq!(r.x, Image::zeros(4, 4));
}

#[test]
fn measurement_sweep_shape_and_trend() {
    let g = linear_generator(10, 5, 8);
    let m_list = [5, 20, 40, 100];
    let table = csgm_measurement_sweep(&g, Ensemble::Gaussian, &m_list, 3, &backtracking(1), 9).unwrap();
    assert_eq!(table.rows.len(), m_list.len());
    for (row, &m) in table.rows.iter().zip(&m_list) {
        assert_eq!(row.m, m);
        assert_eq!(row.errors.len(), 3);
    }
    assert!(table.rows[3].median <= 1e-2);
    assert!(table.rows[3].median <= table.rows[0].median);
    let again = csgm_measurement_sweep(&g, Ensemble::Gaussian, &m_list, 3, &backtracking(1), 9).unwrap();
    assert_eq!(table, again);
}

// ---------------------------------------------------------------- untrained prior

#[test]
fn untrained_decoder_fits_a_smooth_image() {
    let (h, w) = (16, 16);
    let x = Image::from_fn(h, w, |i, j| 0.3 + 0.4 * ((i as f64 / 5.0).sin() * (j as f64 / 6.0).cos()));
    let op = identity(h, w);
    let y = op.apply(&x).unwrap();
    let cfg = DipConfig { checkpoint_every: 0, ..DipConfig::new(h, w, 1500, 3) };
    let r = dip_reconstruct(&op, &y, &cfg).unwrap();
    let last = *r.loss_trace.last().unwrap();
    assert!(last < 1e-4, "final fit {last}");
    assert_eq!(r.loss_trace.len(), 1501);
}
