use crate::error::{InvError, Result};
use crate::image::MeasurementVector;
use crate::rng;

/// Additive white Gaussian noise with a fixed seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma: f64,
    pub seed: u64,
}

/// Returns `y + σ g` with `g` drawn from the seeded standard normal stream.
pub fn add_noise(y: &MeasurementVector, noise: &NoiseModel) -> Result<MeasurementVector> {
    if !(noise.sigma >= 0.0) || !noise.sigma.is_finite() {
        return Err(InvError::InvalidSpec(format!("noise sigma must be >= 0, got {}", noise.sigma)));
    }
    let mut out = y.clone();
    out.sigma = noise.sigma;
    if noise.sigma == 0.0 {
        return Ok(out);
    }
    let g = rng::gaussian_vec(&mut rng::rng(noise.seed), y.len());
    out.data.iter_mut().zip(g).for_each(|(v, gi)| *v += noise.sigma * gi);
    Ok(out)
}
