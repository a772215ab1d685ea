//! Forward measurement models.
//!
//! Every linear kind comes with an exact transpose so that
//! `⟨A x, u⟩ = ⟨x, Aᵀ u⟩` holds to rounding error. Phase retrieval is the one
//! nonlinear kind; it only supports [`ForwardOperator::jtvp`].

mod conv;
mod mri;
mod radon;

use rand_distr::{Distribution, StandardNormal};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, InvError, Result};
use crate::image::{Image, MeasurementVector};
use crate::rng;

pub use conv::Kernel;
pub use radon::radon_forward;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ensemble {
    #[default]
    Gaussian,
    Bernoulli,
}

/// Serializable description of an operator. Random matrices are described by
/// their seed only and regenerated on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorSpec {
    Identity { height: usize, width: usize },
    Convolution { height: usize, width: usize, kernel: Kernel },
    Subsample { height: usize, width: usize, mask: Vec<u8> },
    Superresolution { height: usize, width: usize, kernel: Kernel, factor: usize },
    Compressive { height: usize, width: usize, m: usize, seed: u64, #[serde(default)] ensemble: Ensemble },
    Mri { height: usize, width: usize, mask: Vec<u8>, #[serde(default)] sensitivity: Option<Vec<f64>> },
    Radon { height: usize, width: usize, n_angles: usize, n_detectors: usize },
    PhaseRetrieval { inner: Box<OperatorSpec> },
}

impl OperatorSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            OperatorSpec::Identity { .. } => "identity",
            OperatorSpec::Convolution { .. } => "convolution",
            OperatorSpec::Subsample { .. } => "subsample",
            OperatorSpec::Superresolution { .. } => "superresolution",
            OperatorSpec::Compressive { .. } => "compressive",
            OperatorSpec::Mri { .. } => "mri",
            OperatorSpec::Radon { .. } => "radon",
            OperatorSpec::PhaseRetrieval { .. } => "phase_retrieval",
        }
    }

    pub fn image_dims(&self) -> (usize, usize) {
        match self {
            OperatorSpec::Identity { height, width }
            | OperatorSpec::Convolution { height, width, .. }
            | OperatorSpec::Subsample { height, width, .. }
            | OperatorSpec::Superresolution { height, width, .. }
            | OperatorSpec::Compressive { height, width, .. }
            | OperatorSpec::Mri { height, width, .. }
            | OperatorSpec::Radon { height, width, .. } => (*height, *width),
            OperatorSpec::PhaseRetrieval { inner } => inner.image_dims(),
        }
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Identity,
    Convolution(Kernel),
    Subsample { selected: Vec<usize> },
    Superresolution { kernel: Kernel, factor: usize },
    Compressive { matrix: Vec<f64> },
    Mri(mri::Mri),
    Radon(radon::RadonMatrix),
    PhaseRetrieval(Box<ForwardOperator>),
}

/// Immutable forward operator built by [`make_operator`].
#[derive(Debug, Clone)]
pub struct ForwardOperator {
    spec: OperatorSpec,
    kind: Kind,
    height: usize,
    width: usize,
    output_len: usize,
    output_shape: (usize, usize),
}

fn validate_mask(mask: &[u8], n: usize) -> Result<Vec<usize>> {
    check_len(n, mask.len())?;
    if mask.iter().any(|&v| v > 1) {
        return Err(InvError::InvalidSpec("mask entries must be 0 or 1".into()));
    }
    let selected: Vec<usize> = mask.iter().enumerate().filter(|(_, &v)| v == 1).map(|(i, _)| i).collect();
    if selected.is_empty() {
        return Err(InvError::InvalidSpec("mask selects zero pixels".into()));
    }
    Ok(selected)
}

fn validate_kernel(k: &Kernel, h: usize, w: usize) -> Result<()> {
    if k.height == 0 || k.width == 0 || k.values.len() != k.height * k.width {
        return Err(InvError::InvalidSpec("kernel dims inconsistent with values".into()));
    }
    if k.height > h || k.width > w {
        return Err(InvError::InvalidSpec(format!("kernel {}x{} larger than image {h}x{w}", k.height, k.width)));
    }
    check_finite("kernel", &k.values)
}

/// Deterministic random measurement matrix, row-major `m × n`, entries with
/// variance `1/m`.
pub fn compressive_matrix(seed: u64, m: usize, n: usize, ensemble: Ensemble) -> Vec<f64> {
    let mixed = rng::derive_seed(rng::derive_seed(seed, m as u64), n as u64);
    let mut r = rng::rng(mixed);
    let s = 1.0 / (m as f64).sqrt();
    (0..m * n)
        .map(|_| match ensemble {
            Ensemble::Gaussian => s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut r),
            Ensemble::Bernoulli => {
                if r.random::<bool>() {
                    s
                } else {
                    -s
                }
            }
        })
        .collect()
}

/// Builds an operator from its specification.
pub fn make_operator(spec: &OperatorSpec) -> Result<ForwardOperator> {
    let (h, w) = spec.image_dims();
    if h == 0 || w == 0 {
        return Err(InvError::InvalidSpec(format!("image dims must be positive, got {h}x{w}")));
    }
    let n = h * w;
    let (kind, output_shape) = match spec {
        OperatorSpec::Identity { .. } => (Kind::Identity, (h, w)),
        OperatorSpec::Convolution { kernel, .. } => {
            validate_kernel(kernel, h, w)?;
            (Kind::Convolution(kernel.clone()), (h, w))
        }
        OperatorSpec::Subsample { mask, .. } => {
            let selected = validate_mask(mask, n)?;
            let m = selected.len();
            (Kind::Subsample { selected }, (1, m))
        }
        OperatorSpec::Superresolution { kernel, factor, .. } => {
            validate_kernel(kernel, h, w)?;
            if *factor == 0 {
                return Err(InvError::InvalidSpec("superresolution factor must be >= 1".into()));
            }
            let shape = (h.div_ceil(*factor), w.div_ceil(*factor));
            (Kind::Superresolution { kernel: kernel.clone(), factor: *factor }, shape)
        }
        OperatorSpec::Compressive { m, seed, ensemble, .. } => {
            if *m == 0 {
                return Err(InvError::InvalidSpec("compressive operator needs m >= 1".into()));
            }
            (Kind::Compressive { matrix: compressive_matrix(*seed, *m, n, *ensemble) }, (1, *m))
        }
        OperatorSpec::Mri { mask, sensitivity, .. } => {
            let selected = validate_mask(mask, n)?;
            let sens = match sensitivity {
                Some(s) => {
                    check_len(n, s.len())?;
                    check_finite("sensitivity", s)?;
                    s.clone()
                }
                None => vec![1.0; n],
            };
            let m = selected.len();
            (Kind::Mri(mri::Mri::new(h, w, selected, sens)), (2, m))
        }
        OperatorSpec::Radon { n_angles, n_detectors, .. } => {
            if *n_angles == 0 || *n_detectors == 0 {
                return Err(InvError::InvalidSpec("degenerate radon geometry: need n_angles >= 1 and n_detectors >= 1".into()));
            }
            (Kind::Radon(radon::RadonMatrix::new(h, w, *n_angles, *n_detectors)), (*n_angles, *n_detectors))
        }
        OperatorSpec::PhaseRetrieval { inner } => {
            if matches!(**inner, OperatorSpec::PhaseRetrieval { .. }) {
                return Err(InvError::InvalidSpec("phase retrieval needs a linear inner operator".into()));
            }
            let inner_op = make_operator(inner)?;
            let shape = inner_op.output_shape;
            (Kind::PhaseRetrieval(Box::new(inner_op)), shape)
        }
    };
    Ok(ForwardOperator {
        spec: spec.clone(),
        kind,
        height: h,
        width: w,
        output_len: output_shape.0 * output_shape.1,
        output_shape,
    })
}

impl ForwardOperator {
    pub fn spec(&self) -> &OperatorSpec {
        &self.spec
    }

    pub fn name(&self) -> &'static str {
        self.spec.kind_name()
    }

    pub fn input_dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn input_len(&self) -> usize {
        self.height * self.width
    }

    pub fn output_len(&self) -> usize {
        self.output_len
    }

    /// Natural 2-D layout of the measurements, used for display.
    pub fn output_shape(&self) -> (usize, usize) {
        self.output_shape
    }

    pub fn is_linear(&self) -> bool {
        !matches!(self.kind, Kind::PhaseRetrieval(_))
    }

    /// The linear operator inside a phase-retrieval operator.
    pub fn inner(&self) -> Option<&ForwardOperator> {
        match &self.kind {
            Kind::PhaseRetrieval(inner) => Some(inner),
            _ => None,
        }
    }

    /// Noiseless forward map on a raw vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.input_len(), x.len())?;
        let (h, w) = (self.height, self.width);
        Ok(match &self.kind {
            Kind::Identity => x.to_vec(),
            Kind::Convolution(k) => conv::circular_convolve(x, h, w, k),
            Kind::Subsample { selected } => selected.iter().map(|&i| x[i]).collect(),
            Kind::Superresolution { kernel, factor } => {
                let blurred = conv::circular_convolve(x, h, w, kernel);
                let (oh, ow) = self.output_shape;
                let mut out = Vec::with_capacity(oh * ow);
                for i in 0..oh {
                    for j in 0..ow {
                        out.push(blurred[i * factor * w + j * factor]);
                    }
                }
                out
            }
            Kind::Compressive { matrix } => {
                let n = x.len();
                matrix.chunks_exact(n).map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
            }
            Kind::Mri(m) => m.forward(x),
            Kind::Radon(r) => r.forward(x),
            Kind::PhaseRetrieval(inner) => inner.forward(x)?.into_iter().map(|v| v * v).collect(),
        })
    }

    /// Exact transpose of [`forward`](Self::forward) for linear kinds.
    pub fn transpose(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(self.output_len, u.len())?;
        let (h, w) = (self.height, self.width);
        Ok(match &self.kind {
            Kind::Identity => u.to_vec(),
            Kind::Convolution(k) => conv::circular_correlate(u, h, w, k),
            Kind::Subsample { selected } => {
                let mut x = vec![0.0; h * w];
                for (&i, &v) in selected.iter().zip(u) {
                    x[i] = v;
                }
                x
            }
            Kind::Superresolution { kernel, factor } => {
                let (oh, ow) = self.output_shape;
                let mut up = vec![0.0; h * w];
                for i in 0..oh {
                    for j in 0..ow {
                        up[i * factor * w + j * factor] = u[i * ow + j];
                    }
                }
                conv::circular_correlate(&up, h, w, kernel)
            }
            Kind::Compressive { matrix } => {
                let n = h * w;
                let mut x = vec![0.0; n];
                for (row, &ui) in matrix.chunks_exact(n).zip(u) {
                    x.iter_mut().zip(row).for_each(|(xi, a)| *xi += a * ui);
                }
                x
            }
            Kind::Mri(m) => m.transpose(u),
            Kind::Radon(r) => r.transpose(u),
            Kind::PhaseRetrieval(_) => {
                return Err(InvError::Unsupported("adjoint of nonlinear phase_retrieval operator; use jtvp".into()))
            }
        })
    }

    /// Jacobian-transpose-vector product at `x`. Equals the transpose for
    /// linear kinds; for phase retrieval it is `2 Aᵀ(u ⊙ A x)`.
    pub fn jtvp_vec(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        check_len(self.input_len(), x.len())?;
        check_len(self.output_len, u.len())?;
        match &self.kind {
            Kind::PhaseRetrieval(inner) => {
                let ax = inner.forward(x)?;
                let weighted: Vec<f64> = ax.iter().zip(u).map(|(a, b)| 2.0 * a * b).collect();
                inner.transpose(&weighted)
            }
            _ => self.transpose(u),
        }
    }

    fn check_image(&self, x: &Image) -> Result<()> {
        if x.dims() != (self.height, self.width) {
            return Err(InvError::DimensionMismatch { expected: self.input_len(), got: x.len() });
        }
        Ok(())
    }

    pub fn apply(&self, x: &Image) -> Result<MeasurementVector> {
        self.check_image(x)?;
        Ok(MeasurementVector::new(self.forward(x.data())?, self.name()))
    }

    pub fn adjoint(&self, u: &MeasurementVector) -> Result<Image> {
        let x = self.transpose(&u.data)?;
        Image::new(self.height, self.width, x)
    }

    pub fn jtvp(&self, x: &Image, u: &MeasurementVector) -> Result<Image> {
        self.check_image(x)?;
        Image::new(self.height, self.width, self.jtvp_vec(x.data(), &u.data)?)
    }

    /// Kernel of convolution-type operators.
    pub fn kernel(&self) -> Option<&Kernel> {
        match &self.kind {
            Kind::Convolution(k) | Kind::Superresolution { kernel: k, .. } => Some(k),
            Kind::PhaseRetrieval(inner) => inner.kernel(),
            _ => None,
        }
    }

    /// Dense compressive matrix, row-major.
    pub fn matrix(&self) -> Option<&[f64]> {
        match &self.kind {
            Kind::Compressive { matrix } => Some(matrix),
            Kind::PhaseRetrieval(inner) => inner.matrix(),
            _ => None,
        }
    }

    /// Operator with the same geometry but an explicitly given dense matrix.
    /// Only meaningful for compressive operators.
    pub fn with_matrix(&self, matrix: Vec<f64>) -> Result<Self> {
        match &self.kind {
            Kind::Compressive { matrix: old } => {
                check_len(old.len(), matrix.len())?;
                check_finite("matrix", &matrix)?;
                Ok(Self { kind: Kind::Compressive { matrix }, ..self.clone() })
            }
            _ => Err(InvError::Unsupported(format!("with_matrix on {}", self.name()))),
        }
    }
}

/// Convenience: `op.apply(x)`.
pub fn apply(op: &ForwardOperator, x: &Image) -> Result<MeasurementVector> {
    op.apply(x)
}

/// Convenience: `op.adjoint(u)`.
pub fn adjoint(op: &ForwardOperator, u: &MeasurementVector) -> Result<Image> {
    op.adjoint(u)
}

/// Convenience: `op.jtvp(x, u)`.
pub fn jtvp(op: &ForwardOperator, x: &Image, u: &MeasurementVector) -> Result<Image> {
    op.jtvp(x, u)
}

/// Bernoulli(p) 0/1 mask; always selects at least one pixel.
pub fn random_mask(height: usize, width: usize, fraction: f64, seed: u64) -> Vec<u8> {
    let mut r = rng::rng(seed);
    let mut mask: Vec<u8> = (0..height * width).map(|_| u8::from(r.random::<f64>() < fraction)).collect();
    if mask.iter().all(|&v| v == 0) && !mask.is_empty() {
        mask[0] = 1;
    }
    mask
}
