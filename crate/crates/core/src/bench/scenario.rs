use serde::{Deserialize, Serialize};

use super::perturb::Perturbation;
use super::phantom::{Feature, PhantomKind};
use crate::error::{InvError, Result};
use crate::learned::{ApproxInverse, TrainingRegime};
use crate::operators::OperatorSpec;
use crate::regularizers::Regularizer;

/// How much of the forward model is available, and when.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Knowledge {
    KnownTrainTest,
    KnownTestOnly,
    Partial,
    Unknown,
}

impl Knowledge {
    pub const ALL: [Knowledge; 4] = [Knowledge::KnownTrainTest, Knowledge::KnownTestOnly, Knowledge::Partial, Knowledge::Unknown];

    pub fn name(self) -> &'static str {
        match self {
            Knowledge::KnownTrainTest => "known_train_test",
            Knowledge::KnownTestOnly => "known_test_only",
            Knowledge::Partial => "partial",
            Knowledge::Unknown => "unknown",
        }
    }
}

/// Optimizer settings for a training stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_epochs() -> usize {
    3
}
fn default_lr() -> f64 {
    3e-3
}
fn default_batch() -> usize {
    8
}
fn default_channels() -> usize {
    8
}
fn default_depth() -> usize {
    3
}
fn default_blocks() -> usize {
    5
}
fn default_iters() -> usize {
    100
}
fn default_rho() -> f64 {
    1.0
}
fn default_probes() -> usize {
    1
}
fn default_eps() -> f64 {
    1e-3
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self { epochs: default_epochs(), lr: default_lr(), batch_size: default_batch() }
    }
}

/// Denoiser plugged into PnP-ADMM or RED.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DenoiserSpec {
    /// Total-variation proximal map with weight `lambda`.
    Tv { lambda: f64 },
    /// Residual CNN trained on clean images plus Gaussian noise of level `sigma`.
    Learned {
        sigma: f64,
        #[serde(default = "default_channels")]
        channels: usize,
        #[serde(default = "default_depth")]
        depth: usize,
        #[serde(default)]
        train: TrainSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodSpec {
    /// The approximate inverse alone.
    Baseline {
        #[serde(default)]
        inverse: Option<ApproxInverse>,
    },
    MlLeastSquares {
        #[serde(default)]
        lambda: f64,
        #[serde(default = "default_iters")]
        max_iters: usize,
    },
    ProxGradient {
        regularizer: Regularizer,
        #[serde(default = "default_iters")]
        max_iters: usize,
    },
    Admm {
        regularizer: Regularizer,
        #[serde(default = "default_rho")]
        rho: f64,
        #[serde(default = "default_iters")]
        max_iters: usize,
    },
    Pnp {
        denoiser: DenoiserSpec,
        #[serde(default = "default_rho")]
        rho: f64,
        #[serde(default = "default_iters")]
        max_iters: usize,
    },
    Red {
        denoiser: DenoiserSpec,
        lambda: f64,
        #[serde(default = "default_iters")]
        max_iters: usize,
    },
    PhaseRetrieval {
        #[serde(default = "default_restarts")]
        restarts: usize,
        #[serde(default = "default_iters")]
        max_iters: usize,
    },
    Dip {
        iterations: usize,
        #[serde(default = "default_dip_lr")]
        lr: f64,
    },
    Residual {
        #[serde(default = "default_channels")]
        channels: usize,
        #[serde(default = "default_depth")]
        depth: usize,
        #[serde(default)]
        inverse: Option<ApproxInverse>,
        /// Monte Carlo probes for SURE/GSURE training.
        #[serde(default = "default_probes")]
        probes: usize,
        #[serde(default = "default_eps")]
        probe_eps: f64,
        #[serde(default)]
        train: TrainSpec,
    },
    Unrolled {
        #[serde(default = "default_blocks")]
        blocks: usize,
        #[serde(default = "default_channels")]
        channels: usize,
        #[serde(default = "default_depth")]
        depth: usize,
        /// Initial step; `None` selects `0.9/‖A‖²`.
        #[serde(default)]
        eta: Option<f64>,
        #[serde(default)]
        train: TrainSpec,
    },
    Csgm {
        latent_dim: usize,
        #[serde(default = "default_restarts")]
        restarts: usize,
        #[serde(default = "default_csgm_steps")]
        steps: usize,
        #[serde(default = "default_csgm_lr")]
        lr: f64,
        #[serde(default)]
        train: TrainSpec,
    },
}

fn default_restarts() -> usize {
    3
}
fn default_dip_lr() -> f64 {
    0.01
}
fn default_csgm_steps() -> usize {
    200
}
fn default_csgm_lr() -> f64 {
    0.05
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::Baseline { .. } => "baseline",
            MethodSpec::MlLeastSquares { .. } => "ml_least_squares",
            MethodSpec::ProxGradient { .. } => "prox_gradient",
            MethodSpec::Admm { .. } => "admm",
            MethodSpec::Pnp { .. } => "pnp",
            MethodSpec::Red { .. } => "red",
            MethodSpec::PhaseRetrieval { .. } => "phase_retrieval",
            MethodSpec::Dip { .. } => "dip",
            MethodSpec::Residual { .. } => "residual",
            MethodSpec::Unrolled { .. } => "unrolled",
            MethodSpec::Csgm { .. } => "csgm",
        }
    }

    /// Whether the method fits parameters to a training set.
    pub fn is_trained(&self) -> bool {
        match self {
            MethodSpec::Residual { .. } | MethodSpec::Unrolled { .. } | MethodSpec::Csgm { .. } => true,
            MethodSpec::Pnp { denoiser, .. } | MethodSpec::Red { denoiser, .. } => matches!(denoiser, DenoiserSpec::Learned { .. }),
            _ => false,
        }
    }

    /// Method-family name used in the taxonomy matrix; PnP and RED with a
    /// learned denoiser are distinguished from their hand-crafted variants.
    pub fn family(&self) -> &'static str {
        match self {
            MethodSpec::Pnp { denoiser: DenoiserSpec::Learned { .. }, .. } => "pnp_learned",
            MethodSpec::Red { denoiser: DenoiserSpec::Learned { .. }, .. } => "red_learned",
            MethodSpec::Pnp { .. } => "pnp_tv",
            MethodSpec::Red { .. } => "red_tv",
            other => other.name(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub feature: Feature,
    /// Top-left corner; `None` centres the feature.
    #[serde(default)]
    pub position: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub phantom: PhantomKind,
    /// Images generated before the 80/20 train/test split.
    pub count: usize,
    /// Standard deviation of the additive measurement noise.
    #[serde(default)]
    pub noise_sigma: f64,
    /// Written into test images only.
    #[serde(default)]
    pub test_feature: Option<FeatureSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Psnr,
    Ssim,
}

fn default_metrics() -> Vec<Metric> {
    vec![Metric::Psnr, Metric::Ssim]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub knowledge: Knowledge,
    pub regime: TrainingRegime,
    pub operator: OperatorSpec,
    /// Operator change applied to test measurements only; reconstruction
    /// still assumes the nominal operator.
    #[serde(default)]
    pub test_perturbation: Option<Perturbation>,
    pub dataset: DatasetSpec,
    pub method: MethodSpec,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub seed: u64,
    /// Wall-clock timing makes reports machine dependent, so it is opt-in;
    /// without it `runtime_ms` is written as 0.
    #[serde(default)]
    pub record_timing: bool,
}

/// Status of one (knowledge, regime) cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CellStatus {
    Accepted { methods: &'static [&'static str] },
    Rejected { reason: &'static str },
}

const CLASSICAL: &[&str] = &["baseline", "ml_least_squares", "prox_gradient", "admm", "pnp_tv", "red_tv", "phase_retrieval", "dip"];
const UNKNOWN_REASON: &str = "forward model unknown: limited options without paired (x,y) training samples";

/// The validation matrix over every (knowledge, regime) pair.
pub fn cell_status(knowledge: Knowledge, regime: TrainingRegime) -> CellStatus {
    use CellStatus::*;
    use Knowledge::*;
    use TrainingRegime::*;
    match (knowledge, regime) {
        (KnownTrainTest, PairedXy) => Accepted { methods: &["residual", "unrolled"] },
        (KnownTrainTest, XOnly) => Accepted { methods: &["residual", "unrolled"] },
        (KnownTrainTest, YOnlySure | YOnlyGsure) => Accepted { methods: &["residual"] },
        (KnownTrainTest, Noise2Noise) => Rejected {
            reason: "forward model known during training: measurement-only training uses SURE/GSURE (y_only_sure, y_only_gsure); noise2noise belongs to the partially known cell",
        },
        (KnownTrainTest | KnownTestOnly, Untrained) => Accepted { methods: CLASSICAL },
        (KnownTestOnly, XOnly) => Accepted { methods: &["csgm", "pnp_learned", "red_learned"] },
        (KnownTestOnly, PairedXy) => Rejected {
            reason: "forward model unavailable during training: paired data without the operator offers nothing beyond an x-only image prior here; use x_only",
        },
        (KnownTestOnly, YOnlySure | YOnlyGsure | Noise2Noise) => Rejected {
            reason: "forward model unavailable during training: measurement-only losses need the operator at training time",
        },
        (Partial, Noise2Noise) => Accepted { methods: &["residual"] },
        (Partial, PairedXy) => Rejected { reason: "partially known operator with paired data: calibration-parameter learning is not implemented" },
        (Partial, XOnly) => Rejected { reason: "partially known operator with x-only data: blind reconstruction with adversarial priors is not implemented" },
        (Partial, YOnlySure | YOnlyGsure) => Rejected { reason: "partially known operator: SURE/GSURE need the exact operator and noise level" },
        (Partial, Untrained) => Rejected { reason: "partially known operator: classical solvers and untrained priors need the exact operator" },
        (Unknown, PairedXy) => Rejected {
            reason: "forward model unknown with paired data: direct measurement-to-image learning with dense layers is not implemented",
        },
        (Unknown, _) => Rejected { reason: UNKNOWN_REASON },
    }
}

fn taxonomy(knowledge: Knowledge, regime: TrainingRegime, msg: impl Into<String>) -> InvError {
    InvError::Taxonomy(format!("({}, {}): {}", knowledge.name(), regime.name(), msg.into()))
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(InvError::InvalidSpec(format!("{name} must be > 0, got {v}")));
    }
    Ok(())
}

fn check_train(t: &TrainSpec) -> Result<()> {
    positive("learning rate", t.lr)?;
    if t.epochs == 0 || t.batch_size == 0 {
        return Err(InvError::InvalidSpec("epochs and batch_size must be >= 1".into()));
    }
    Ok(())
}

impl Scenario {
    /// Checks the cell, the method/cell pairing and the method's own
    /// requirements on operator and data.
    pub fn validate(&self) -> Result<()> {
        let (k, r) = (self.knowledge, self.regime);
        let family = self.method.family();
        match cell_status(k, r) {
            CellStatus::Rejected { reason } => return Err(taxonomy(k, r, reason)),
            CellStatus::Accepted { methods } => {
                if !methods.contains(&family) {
                    return Err(taxonomy(k, r, format!("method `{family}` is not valid in this cell; accepted: {}", methods.join(", "))));
                }
            }
        }
        if self.id.is_empty() {
            return Err(InvError::InvalidSpec("scenario id must not be empty".into()));
        }
        if self.metrics.is_empty() {
            return Err(InvError::InvalidSpec("scenario needs at least one metric".into()));
        }
        let (h, w) = self.operator.image_dims();
        if h < 8 || w < 8 {
            return Err(InvError::InvalidSpec(format!("scenario images must be at least 8x8, got {h}x{w}")));
        }
        let d = &self.dataset;
        if !(d.noise_sigma >= 0.0) || !d.noise_sigma.is_finite() {
            return Err(InvError::InvalidSpec(format!("noise_sigma must be >= 0, got {}", d.noise_sigma)));
        }
        let train_len = d.count * 4 / 5;
        if d.count - train_len == 0 {
            return Err(InvError::InvalidSpec(format!("dataset of {} images leaves no test images", d.count)));
        }
        if self.method.is_trained() && train_len == 0 {
            return Err(InvError::InvalidSpec(format!("dataset of {} images leaves no training images", d.count)));
        }
        if let Some(p) = self.test_perturbation {
            if !self.method.is_trained() {
                // classical methods see the operator at test time, so the change
                // would be a different problem rather than a model mismatch
                return Err(InvError::InvalidSpec("test_perturbation needs a method trained on the nominal operator".into()));
            }
            if p.magnitude() < 0.0 {
                return Err(InvError::InvalidSpec("perturbation magnitude must be >= 0".into()));
            }
        }
        let linear = !matches!(self.operator, OperatorSpec::PhaseRetrieval { .. });
        let identity = matches!(self.operator, OperatorSpec::Identity { .. });
        let needs_linear = |what: &str| -> Result<()> {
            if linear {
                Ok(())
            } else {
                Err(InvError::Unsupported(format!("{what} needs a linear operator")))
            }
        };
        match r {
            TrainingRegime::YOnlySure => {
                if !identity {
                    return Err(taxonomy(k, r, "SURE training is defined for denoising (identity operator); use y_only_gsure"));
                }
                if d.noise_sigma <= 0.0 {
                    return Err(taxonomy(k, r, "SURE training needs a known noise level sigma > 0"));
                }
            }
            TrainingRegime::YOnlyGsure | TrainingRegime::Noise2Noise => {
                if d.noise_sigma <= 0.0 {
                    return Err(taxonomy(k, r, "measurement-only training needs noise_sigma > 0"));
                }
            }
            _ => {}
        }
        match &self.method {
            MethodSpec::Baseline { inverse } => {
                needs_linear("baseline")?;
                if let Some(ApproxInverse::Pseudoinverse { lambda }) = inverse {
                    if !(*lambda >= 0.0) {
                        return Err(InvError::InvalidSpec("pinv lambda must be >= 0".into()));
                    }
                }
            }
            MethodSpec::MlLeastSquares { lambda, max_iters } => {
                needs_linear("ml_least_squares")?;
                if !(*lambda >= 0.0) || *max_iters == 0 {
                    return Err(InvError::InvalidSpec("ml_least_squares needs lambda >= 0 and max_iters >= 1".into()));
                }
            }
            MethodSpec::ProxGradient { max_iters, .. } | MethodSpec::Admm { max_iters, .. } => {
                needs_linear(self.method.name())?;
                if *max_iters == 0 {
                    return Err(InvError::InvalidSpec("max_iters must be >= 1".into()));
                }
                if let MethodSpec::Admm { rho, .. } = &self.method {
                    positive("rho", *rho)?;
                }
            }
            MethodSpec::Pnp { denoiser, rho, max_iters } => {
                needs_linear("pnp")?;
                positive("rho", *rho)?;
                check_denoiser(denoiser, *max_iters)?;
            }
            MethodSpec::Red { denoiser, lambda, max_iters } => {
                needs_linear("red")?;
                if !(*lambda >= 0.0) {
                    return Err(InvError::InvalidSpec("red lambda must be >= 0".into()));
                }
                check_denoiser(denoiser, *max_iters)?;
            }
            MethodSpec::PhaseRetrieval { restarts, max_iters } => {
                if linear {
                    return Err(InvError::InvalidSpec("phase_retrieval method needs a phase_retrieval operator".into()));
                }
                if *restarts == 0 || *max_iters == 0 {
                    return Err(InvError::InvalidSpec("phase_retrieval needs restarts >= 1 and max_iters >= 1".into()));
                }
            }
            MethodSpec::Dip { iterations, lr } => {
                positive("dip lr", *lr)?;
                if *iterations == 0 {
                    return Err(InvError::InvalidSpec("dip needs iterations >= 1".into()));
                }
            }
            MethodSpec::Residual { channels, depth, probes, probe_eps, train, .. } => {
                needs_linear("residual")?;
                check_train(train)?;
                if *channels == 0 || *depth < 2 {
                    return Err(InvError::InvalidSpec("residual needs channels >= 1 and depth >= 2".into()));
                }
                if *probes == 0 {
                    return Err(InvError::InvalidSpec("residual needs probes >= 1".into()));
                }
                positive("probe_eps", *probe_eps)?;
            }
            MethodSpec::Unrolled { blocks, channels, depth, eta, train } => {
                needs_linear("unrolled")?;
                check_train(train)?;
                if *blocks == 0 || *channels == 0 || *depth < 2 {
                    return Err(InvError::InvalidSpec("unrolled needs blocks >= 1, channels >= 1 and depth >= 2".into()));
                }
                if let Some(e) = eta {
                    positive("eta", *e)?;
                }
            }
            MethodSpec::Csgm { latent_dim, restarts, steps, lr, train } => {
                check_train(train)?;
                positive("csgm lr", *lr)?;
                if *latent_dim == 0 || 4 * latent_dim > h * w {
                    return Err(InvError::InvalidSpec(format!("csgm latent_dim must be in 1..={} for {h}x{w} images", h * w / 4)));
                }
                if *restarts == 0 || *steps == 0 {
                    return Err(InvError::InvalidSpec("csgm needs restarts >= 1 and steps >= 1".into()));
                }
            }
        }
        Ok(())
    }
}

fn check_denoiser(d: &DenoiserSpec, max_iters: usize) -> Result<()> {
    if max_iters == 0 {
        return Err(InvError::InvalidSpec("max_iters must be >= 1".into()));
    }
    match d {
        DenoiserSpec::Tv { lambda } => positive("tv lambda", *lambda),
        DenoiserSpec::Learned { sigma, channels, depth, train } => {
            positive("denoiser sigma", *sigma)?;
            check_train(train)?;
            if *channels == 0 || *depth < 2 {
                return Err(InvError::InvalidSpec("denoiser needs channels >= 1 and depth >= 2".into()));
            }
            Ok(())
        }
    }
}
