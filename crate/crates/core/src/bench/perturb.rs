use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{InvError, Result};
use crate::operators::{make_operator, ForwardOperator, Kernel, OperatorSpec};
use crate::rng;

/// Test-time change to a forward operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    /// Multiplies each kernel tap by `1 + ε g`, clips at zero and rescales to
    /// the original kernel sum.
    KernelJitter { eps: f64 },
    /// Moves this fraction of the sampled locations to unsampled ones.
    MaskSwap { fraction: f64 },
    /// Adds `ε g/√m` to every compressive matrix entry.
    MatrixNoise { eps: f64 },
}

impl Perturbation {
    pub fn magnitude(self) -> f64 {
        match self {
            Perturbation::KernelJitter { eps } | Perturbation::MatrixNoise { eps } => eps,
            Perturbation::MaskSwap { fraction } => fraction,
        }
    }

    pub fn label(self) -> String {
        match self {
            Perturbation::KernelJitter { eps } => format!("kernel_jitter({eps})"),
            Perturbation::MaskSwap { fraction } => format!("mask_swap({fraction})"),
            Perturbation::MatrixNoise { eps } => format!("matrix_noise({eps})"),
        }
    }
}

fn jitter_kernel(k: &Kernel, eps: f64, seed: u64) -> Result<Kernel> {
    let g = rng::gaussian_vec(&mut rng::rng(seed), k.values.len());
    let mut v: Vec<f64> = k.values.iter().zip(&g).map(|(&kv, &gv)| (kv * (1.0 + eps * gv)).max(0.0)).collect();
    let (target, got) = (k.sum(), v.iter().sum::<f64>());
    if got <= 0.0 {
        return Err(InvError::Divergence("jittered kernel has no positive taps".into()));
    }
    v.iter_mut().for_each(|x| *x *= target / got);
    Kernel::new(k.height, k.width, v)
}

fn swap_mask(mask: &[u8], fraction: f64, seed: u64) -> Vec<u8> {
    let mut on: Vec<usize> = (0..mask.len()).filter(|&i| mask[i] == 1).collect();
    let mut off: Vec<usize> = (0..mask.len()).filter(|&i| mask[i] == 0).collect();
    let count = ((fraction * on.len() as f64).round() as usize).min(off.len()).min(on.len());
    let mut r = rng::rng(seed);
    on.shuffle(&mut r);
    off.shuffle(&mut r);
    let mut out = mask.to_vec();
    for k in 0..count {
        out[on[k]] = 0;
        out[off[k]] = 1;
    }
    out
}

fn inapplicable(p: Perturbation, op: &ForwardOperator) -> InvError {
    InvError::Unsupported(format!("{} does not apply to {} operators", p.label(), op.name()))
}

/// Perturbed copy of `op`. A zero magnitude returns `op` unchanged.
pub fn perturb_operator(op: &ForwardOperator, p: Perturbation, seed: u64) -> Result<ForwardOperator> {
    let mag = p.magnitude();
    if !(mag >= 0.0) || !mag.is_finite() {
        return Err(InvError::InvalidSpec(format!("perturbation magnitude must be >= 0, got {mag}")));
    }
    if let Perturbation::MaskSwap { fraction } = p {
        if fraction > 1.0 {
            return Err(InvError::InvalidSpec(format!("mask swap fraction must be <= 1, got {fraction}")));
        }
    }
    let applicable = match (p, op.spec()) {
        (Perturbation::KernelJitter { .. }, OperatorSpec::Convolution { .. } | OperatorSpec::Superresolution { .. }) => true,
        (Perturbation::MaskSwap { .. }, OperatorSpec::Subsample { .. } | OperatorSpec::Mri { .. }) => true,
        (Perturbation::MatrixNoise { .. }, OperatorSpec::Compressive { .. }) => true,
        _ => false,
    };
    if !applicable {
        return Err(inapplicable(p, op));
    }
    if mag == 0.0 {
        return Ok(op.clone());
    }
    match (p, op.spec().clone()) {
        (Perturbation::KernelJitter { eps }, OperatorSpec::Convolution { height, width, kernel }) => {
            make_operator(&OperatorSpec::Convolution { height, width, kernel: jitter_kernel(&kernel, eps, seed)? })
        }
        (Perturbation::KernelJitter { eps }, OperatorSpec::Superresolution { height, width, kernel, factor }) => {
            make_operator(&OperatorSpec::Superresolution { height, width, kernel: jitter_kernel(&kernel, eps, seed)?, factor })
        }
        (Perturbation::MaskSwap { fraction }, OperatorSpec::Subsample { height, width, mask }) => {
            make_operator(&OperatorSpec::Subsample { height, width, mask: swap_mask(&mask, fraction, seed) })
        }
        (Perturbation::MaskSwap { fraction }, OperatorSpec::Mri { height, width, mask, sensitivity }) => {
            make_operator(&OperatorSpec::Mri { height, width, mask: swap_mask(&mask, fraction, seed), sensitivity })
        }
        (Perturbation::MatrixNoise { eps }, OperatorSpec::Compressive { m, .. }) => {
            let a = op.matrix().expect("compressive operator has a matrix");
            let g = rng::gaussian_vec(&mut rng::rng(seed), a.len());
            let s = eps / (m as f64).sqrt();
            op.with_matrix(a.iter().zip(g).map(|(&v, gv)| v + s * gv).collect())
        }
        _ => Err(inapplicable(p, op)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_swap_keeps_count() {
        let mask = vec![1, 1, 1, 1, 0, 0, 0, 0, 0, 0];
        let out = swap_mask(&mask, 0.5, 3);
        assert_eq!(out.iter().filter(|&&v| v == 1).count(), 4);
        assert_eq!(out[..4].iter().filter(|&&v| v == 1).count(), 2);
    }

    #[test]
    fn inapplicable_kinds_rejected() {
        let id = make_operator(&OperatorSpec::Identity { height: 4, width: 4 }).unwrap();
        assert!(perturb_operator(&id, Perturbation::KernelJitter { eps: 0.0 }, 0).is_err());
        let conv = make_operator(&OperatorSpec::Convolution { height: 4, width: 4, kernel: Kernel::box_blur(3).unwrap() }).unwrap();
        assert!(perturb_operator(&conv, Perturbation::MaskSwap { fraction: 0.1 }, 0).is_err());
        assert!(perturb_operator(&conv, Perturbation::KernelJitter { eps: -1.0 }, 0).is_err());
    }
}
