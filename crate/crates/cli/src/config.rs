//! TOML run configuration. Every section is optional and every key has a
//! default; unknown keys are rejected. [`Config::resolve`] fills the derived
//! defaults so the written copy reproduces the run on its own.

use std::path::Path;

use invkit_core::bench::{DatasetSpec, Knowledge, MethodSpec, Metric, Perturbation, Scenario};
use invkit_core::learned::{ApproxInverse, TrainingRegime};
use invkit_core::operators::{random_mask, Ensemble, Kernel};
use invkit_core::regularizers::DEFAULT_TV_ITERS;
use invkit_core::{OperatorSpec, Regularizer};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Name of the resolved configuration written next to every output.
pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Root of every random stream in the run.
    pub seed: u64,
    pub operator: OperatorConfig,
    pub regularizer: RegularizerConfig,
    pub solver: SolverConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub scenario: ScenarioSection,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorConfig {
    /// identity, convolution, subsample, superresolution, compressive, mri
    /// or radon.
    pub kind: String,
    pub height: usize,
    pub width: usize,
    /// Wraps the linear operator as `(Ax)²` measurements.
    pub phase: bool,
    /// Standard deviation of additive measurement noise.
    pub noise_sigma: f64,
    /// gaussian or box.
    pub kernel: String,
    pub kernel_size: usize,
    pub kernel_sigma: f64,
    pub factor: usize,
    /// Compressive measurement count; defaults to `n/4`.
    pub m: Option<usize>,
    pub ensemble: Ensemble,
    /// Fraction of sampled pixels for subsample and mri masks.
    pub fraction: f64,
    /// Seed of the mask or matrix; defaults to the run seed.
    pub mask_seed: Option<u64>,
    pub n_angles: usize,
    /// Defaults to the image diagonal.
    pub n_detectors: Option<usize>,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            kind: "identity".into(),
            height: 32,
            width: 32,
            phase: false,
            noise_sigma: 0.0,
            kernel: "gaussian".into(),
            kernel_size: 5,
            kernel_sigma: 1.0,
            factor: 2,
            m: None,
            ensemble: Ensemble::Gaussian,
            fraction: 0.5,
            mask_seed: None,
            n_angles: 32,
            n_detectors: None,
        }
    }
}

impl OperatorConfig {
    fn resolve(&mut self, seed: u64) {
        let n = self.height * self.width;
        self.m.get_or_insert((n / 4).max(1));
        self.mask_seed.get_or_insert(seed);
        let diag = ((self.height * self.height + self.width * self.width) as f64).sqrt().ceil() as usize;
        self.n_detectors.get_or_insert(diag.max(1));
    }

    fn kernel(&self) -> CliResult<Kernel> {
        let k = match self.kernel.as_str() {
            "gaussian" => Kernel::gaussian(self.kernel_size, self.kernel_sigma),
            "box" => Kernel::box_blur(self.kernel_size),
            other => return Err(CliError::Config(format!("operator.kernel `{other}` (expected gaussian or box)"))),
        };
        Ok(k?)
    }

    /// Operator description; call after [`Config::resolve`].
    pub fn to_spec(&self) -> CliResult<OperatorSpec> {
        let (height, width) = (self.height, self.width);
        let mask_seed = self.mask_seed.unwrap_or(0);
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(CliError::Config(format!("operator.fraction must be in [0, 1], got {}", self.fraction)));
        }
        let linear = match self.kind.as_str() {
            "identity" => OperatorSpec::Identity { height, width },
            "convolution" => OperatorSpec::Convolution { height, width, kernel: self.kernel()? },
            "subsample" => OperatorSpec::Subsample { height, width, mask: random_mask(height, width, self.fraction, mask_seed) },
            "superresolution" => OperatorSpec::Superresolution { height, width, kernel: self.kernel()?, factor: self.factor },
            "compressive" => OperatorSpec::Compressive {
                height,
                width,
                m: self.m.unwrap_or((height * width / 4).max(1)),
                seed: mask_seed,
                ensemble: self.ensemble,
            },
            "mri" => OperatorSpec::Mri { height, width, mask: random_mask(height, width, self.fraction, mask_seed), sensitivity: None },
            "radon" => OperatorSpec::Radon { height, width, n_angles: self.n_angles, n_detectors: self.n_detectors.unwrap_or(1) },
            other => {
                return Err(CliError::Config(format!(
                    "operator.kind `{other}` (expected identity, convolution, subsample, superresolution, compressive, mri or radon)"
                )))
            }
        };
        Ok(if self.phase { OperatorSpec::PhaseRetrieval { inner: Box::new(linear) } } else { linear })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegularizerConfig {
    /// zero, tikhonov, l1 or tv.
    pub kind: String,
    pub lambda: f64,
    /// Inner dual iterations of the TV proximal map.
    pub inner_iters: usize,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        Self { kind: "zero".into(), lambda: 0.0, inner_iters: DEFAULT_TV_ITERS }
    }
}

impl RegularizerConfig {
    pub fn to_regularizer(&self) -> CliResult<Regularizer> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(CliError::Config(format!("regularizer.lambda must be >= 0, got {}", self.lambda)));
        }
        let lambda = self.lambda;
        Ok(match self.kind.as_str() {
            "zero" => Regularizer::Zero,
            "tikhonov" => Regularizer::Tikhonov { lambda },
            "l1" => Regularizer::L1 { lambda },
            "tv" => Regularizer::Tv { lambda, inner_iters: self.inner_iters },
            other => return Err(CliError::Config(format!("regularizer.kind `{other}` (expected zero, tikhonov, l1 or tv)"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// baseline, ml_least_squares, prox_gradient, admm, pnp, red,
    /// phase_retrieval, dip, residual, unrolled or csgm.
    pub method: String,
    pub max_iters: usize,
    pub tol: f64,
    /// Gradient step; `None` uses `0.9/‖A‖²`.
    pub step_size: Option<f64>,
    pub rho: f64,
    /// Tikhonov weight of ml_least_squares and RED weight.
    pub lambda: f64,
    pub restarts: usize,
    /// DIP iterations and CSGM latent steps.
    pub iterations: usize,
    /// Adam rate for DIP and CSGM.
    pub lr: f64,
    /// Approximate inverse of the baseline method.
    pub inverse: Option<String>,
    /// Trained model for residual, unrolled, csgm, or a learned pnp/red
    /// denoiser. Its manifest sits next to it with a `.toml` extension.
    pub checkpoint: Option<String>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: "ml_least_squares".into(),
            max_iters: 100,
            tol: 1e-6,
            step_size: None,
            rho: 1.0,
            lambda: 0.0,
            restarts: 3,
            iterations: 500,
            lr: 0.01,
            inverse: None,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// residual, unrolled or generator.
    pub kind: String,
    pub channels: usize,
    pub depth: usize,
    /// Unrolled iterations.
    pub blocks: usize,
    /// Initial unrolled step; `None` uses `0.9/‖A‖²`.
    pub eta: Option<f64>,
    /// Input stage of the residual model: adjoint, identity or pinv[:λ].
    pub inverse: Option<String>,
    pub latent_dim: usize,
    /// Upsampling stages of the generator.
    pub stages: usize,
    pub kernel: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { kind: "residual".into(), channels: 8, depth: 3, blocks: 5, eta: None, inverse: None, latent_dim: 8, stages: 2, kernel: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub regime: TrainingRegime,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Monte Carlo divergence probes per sample (SURE and GSURE).
    pub probes: usize,
    pub probe_eps: f64,
    /// Noise level assumed by measurement-only and Noise2Noise training.
    pub sigma: Option<f64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { regime: TrainingRegime::PairedXy, epochs: 10, lr: 1e-3, batch_size: 8, probes: 1, probe_eps: 1e-3, sigma: None }
    }
}

/// A benchmark scenario whose operator uses the `[operator]` vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: String,
    pub knowledge: Knowledge,
    pub regime: TrainingRegime,
    #[serde(default)]
    pub operator: OperatorConfig,
    #[serde(default)]
    pub test_perturbation: Option<Perturbation>,
    pub dataset: DatasetSpec,
    pub method: MethodSpec,
    #[serde(default)]
    pub metrics: Option<Vec<Metric>>,
    /// Defaults to the run seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub record_timing: bool,
}

impl ScenarioConfig {
    fn resolve(&mut self, seed: u64) {
        let s = *self.seed.get_or_insert(seed);
        self.operator.resolve(s);
        self.metrics.get_or_insert_with(|| vec![Metric::Psnr, Metric::Ssim]);
    }

    pub fn to_scenario(&self) -> CliResult<Scenario> {
        Ok(Scenario {
            id: self.id.clone(),
            knowledge: self.knowledge,
            regime: self.regime,
            operator: self.operator.to_spec()?,
            test_perturbation: self.test_perturbation,
            dataset: self.dataset.clone(),
            method: self.method.clone(),
            metrics: self.metrics.clone().unwrap_or_else(|| vec![Metric::Psnr, Metric::Ssim]),
            seed: self.seed.unwrap_or(0),
            record_timing: self.record_timing,
        })
    }
}

/// A trained scenario re-evaluated under several operator perturbations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessConfig {
    pub base: ScenarioConfig,
    #[serde(default)]
    pub perturbations: Vec<Perturbation>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub runs: Vec<ScenarioConfig>,
    pub robustness: Vec<RobustnessConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    /// Write PGM previews and figure panels.
    pub pgm: bool,
    /// Figure panels per benchmark report.
    pub max_panels: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into(), pgm: true, max_panels: 4 }
    }
}

/// TOML stores integers as i64.
fn check_seed(what: &str, seed: u64) -> CliResult<()> {
    if seed > i64::MAX as u64 {
        return Err(CliError::Config(format!("{what} must be at most {}, got {seed}", i64::MAX)));
    }
    Ok(())
}

impl Config {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    /// Fills derived defaults; idempotent.
    pub fn resolve(&mut self) -> CliResult<()> {
        check_seed("seed", self.seed)?;
        self.operator.resolve(self.seed);
        if let Some(s) = self.operator.mask_seed {
            check_seed("operator.mask_seed", s)?;
        }
        if self.solver.inverse.is_none() {
            self.solver.inverse = Some(inverse_name(ApproxInverse::default_for(&self.operator.to_spec()?)?));
        }
        if self.model.inverse.is_none() {
            self.model.inverse = self.solver.inverse.clone();
        }
        let seed = self.seed;
        let scenarios = self.scenario.runs.iter_mut().chain(self.scenario.robustness.iter_mut().map(|r| &mut r.base));
        for s in scenarios {
            s.resolve(seed);
            check_seed(&format!("seed of scenario `{}`", s.id), s.seed.unwrap_or(0))?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize configuration: {e}")))
    }
}

/// Inverse of [`ApproxInverse::parse`].
pub fn inverse_name(inv: ApproxInverse) -> String {
    match inv {
        ApproxInverse::Adjoint => "adjoint".into(),
        ApproxInverse::Identity => "identity".into(),
        ApproxInverse::Pseudoinverse { lambda } => format!("pinv:{lambda}"),
    }
}

pub fn parse_inverse(s: Option<&str>) -> CliResult<ApproxInverse> {
    Ok(ApproxInverse::parse(s.unwrap_or("adjoint"))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults() {
        let mut c = Config::parse("").unwrap();
        assert_eq!(c, Config::default());
        c.resolve().unwrap();
        assert_eq!(c.operator.m, Some(256));
        assert_eq!(c.solver.inverse.as_deref(), Some("adjoint"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::parse("[operator]\nkind = \"identity\"\ncolour = 3\n").is_err());
        assert!(Config::parse("bogus = 1\n").is_err());
        assert!(Config::parse("[extra]\n").is_err());
    }

    #[test]
    fn resolved_config_reparses_to_itself() {
        let text = r#"
seed = 7
[operator]
kind = "convolution"
height = 16
width = 16
[[scenario.runs]]
id = "denoise"
knowledge = "known_train_test"
regime = "untrained"
dataset = { phantom = "shapes", count = 5 }
method = { kind = "baseline" }
"#;
        let mut c = Config::parse(text).unwrap();
        c.resolve().unwrap();
        let again = Config::parse(&c.to_toml().unwrap()).unwrap();
        assert_eq!(again, c);
        assert_eq!(c.scenario.runs[0].seed, Some(7));
        assert!(c.solver.inverse.as_deref().unwrap().starts_with("pinv"));
    }

    #[test]
    fn oversized_seed_is_a_config_error() {
        let mut c = Config { seed: u64::MAX, ..Config::default() };
        assert!(matches!(c.resolve(), Err(CliError::Config(_))));
    }

    #[test]
    fn operator_kinds_map_to_specs() {
        for kind in ["identity", "convolution", "subsample", "superresolution", "compressive", "mri", "radon"] {
            let mut o = OperatorConfig { kind: kind.into(), height: 8, width: 8, ..OperatorConfig::default() };
            o.resolve(1);
            assert_eq!(o.to_spec().unwrap().kind_name(), kind);
        }
        let o = OperatorConfig { kind: "fourier".into(), ..OperatorConfig::default() };
        assert!(o.to_spec().is_err());
    }
}
