//! Parallel-beam discrete Radon transform, pixel-driven.
//!
//! Each pixel centre is projected onto the detector axis for every angle in
//! `[0, π)` and its value is split linearly between the two nearest detector
//! bins. The operator is stored as an explicit sparse matrix so the adjoint
//! is its exact transpose.

use crate::error::Result;
use crate::image::{Image, MeasurementVector};
use crate::operators::{make_operator, OperatorSpec};

#[derive(Debug, Clone)]
pub(crate) struct RadonMatrix {
    rows: usize,
    cols: usize,
    /// (sinogram index, pixel index, weight)
    entries: Vec<(u32, u32, f64)>,
}

impl RadonMatrix {
    pub(crate) fn new(h: usize, w: usize, n_angles: usize, n_detectors: usize) -> Self {
        let diag = ((h * h + w * w) as f64).sqrt();
        let spacing = if n_detectors > 1 { diag / (n_detectors - 1) as f64 } else { 1.0 };
        let centre = (n_detectors as f64 - 1.0) / 2.0;
        let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
        let mut entries = Vec::with_capacity(2 * n_angles * h * w);
        for a in 0..n_angles {
            let theta = std::f64::consts::PI * a as f64 / n_angles as f64;
            let (s, c) = theta.sin_cos();
            for i in 0..h {
                let y = cy - i as f64;
                for j in 0..w {
                    let x = j as f64 - cx;
                    let t = (x * c + y * s) / spacing + centre;
                    let d0 = t.floor();
                    let frac = t - d0;
                    let pix = (i * w + j) as u32;
                    for (d, wt) in [(d0 as i64, 1.0 - frac), (d0 as i64 + 1, frac)] {
                        if wt != 0.0 && d >= 0 && (d as usize) < n_detectors {
                            entries.push(((a * n_detectors + d as usize) as u32, pix, wt));
                        }
                    }
                }
            }
        }
        Self { rows: n_angles * n_detectors, cols: h * w, entries }
    }

    pub(crate) fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        for &(r, c, wt) in &self.entries {
            y[r as usize] += wt * x[c as usize];
        }
        y
    }

    pub(crate) fn transpose(&self, u: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.cols];
        for &(r, c, wt) in &self.entries {
            x[c as usize] += wt * u[r as usize];
        }
        x
    }
}

/// Sinogram of `x`, laid out angle-major (`n_angles × n_detectors`).
pub fn radon_forward(x: &Image, n_angles: usize, n_detectors: usize) -> Result<MeasurementVector> {
    let op = make_operator(&OperatorSpec::Radon { height: x.height(), width: x.width(), n_angles, n_detectors })?;
    op.apply(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_image_zero_sinogram() {
        let y = radon_forward(&Image::zeros(8, 8), 6, 11).unwrap();
        assert_eq!(y.len(), 66);
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centre_pixel_mass_per_angle() {
        // brute force: sum each angle's detector row
        for (h, w) in [(9, 9), (8, 8), (7, 10)] {
            let mut x = Image::zeros(h, w);
            x.set(h / 2, w / 2, 1.0);
            let na = 12;
            let nd = 15;
            let y = radon_forward(&x, na, nd).unwrap();
            for a in 0..na {
                let s: f64 = y.data[a * nd..(a + 1) * nd].iter().sum();
                assert!((s - 1.0).abs() < 1e-8, "angle {a}: {s}");
            }
        }
    }

    #[test]
    fn degenerate_geometry_rejected() {
        assert!(radon_forward(&Image::zeros(4, 4), 0, 3).is_err());
        assert!(radon_forward(&Image::zeros(4, 4), 3, 0).is_err());
    }
}
