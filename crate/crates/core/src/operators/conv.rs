//! Circular 2-D convolution. The adjoint is correlation with the same kernel,
//! i.e. convolution with the flipped kernel.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, InvError, Result};

/// Blur kernel, row-major, centred at `(height / 2, width / 2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl Kernel {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(InvError::InvalidSpec(format!("kernel {height}x{width} with {} values", values.len())));
        }
        check_finite("kernel", &values)?;
        Ok(Self { height, width, values })
    }

    /// Normalised isotropic Gaussian of odd `size`.
    pub fn gaussian(size: usize, sigma: f64) -> Result<Self> {
        if size % 2 == 0 || sigma <= 0.0 {
            return Err(InvError::InvalidSpec(format!("gaussian kernel needs odd size and sigma > 0 (got {size}, {sigma})")));
        }
        let c = (size / 2) as f64;
        let mut v: Vec<f64> = (0..size * size)
            .map(|k| {
                let (i, j) = ((k / size) as f64 - c, (k % size) as f64 - c);
                (-(i * i + j * j) / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
        Self::new(size, size, v)
    }

    pub fn box_blur(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(InvError::InvalidSpec("box kernel size must be positive".into()));
        }
        Self::new(size, size, vec![1.0 / (size * size) as f64; size * size])
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    fn center(&self) -> (usize, usize) {
        (self.height / 2, self.width / 2)
    }
}

pub(crate) fn circular_convolve(x: &[f64], h: usize, w: usize, k: &Kernel) -> Vec<f64> {
    let (ci, cj) = k.center();
    let mut y = vec![0.0; h * w];
    for a in 0..k.height {
        for b in 0..k.width {
            let kv = k.values[a * k.width + b];
            if kv == 0.0 {
                continue;
            }
            // y[i, j] += k[a, b] * x[i - (a - ci), j - (b - cj)]
            let di = (h + ci % h - a % h) % h;
            let dj = (w + cj % w - b % w) % w;
            for i in 0..h {
                let si = (i + di) % h;
                let src = &x[si * w..(si + 1) * w];
                let dst = &mut y[i * w..(i + 1) * w];
                for j in 0..w {
                    dst[j] += kv * src[(j + dj) % w];
                }
            }
        }
    }
    y
}

pub(crate) fn circular_correlate(u: &[f64], h: usize, w: usize, k: &Kernel) -> Vec<f64> {
    let (ci, cj) = k.center();
    let mut x = vec![0.0; h * w];
    for a in 0..k.height {
        for b in 0..k.width {
            let kv = k.values[a * k.width + b];
            if kv == 0.0 {
                continue;
            }
            // x[p, q] += k[a, b] * u[p + (a - ci), q + (b - cj)]
            let di = (h + a % h - ci % h) % h;
            let dj = (w + b % w - cj % w) % w;
            for p in 0..h {
                let si = (p + di) % h;
                let src = &u[si * w..(si + 1) * w];
                let dst = &mut x[p * w..(p + 1) * w];
                for q in 0..w {
                    dst[q] += kv * src[(q + dj) % w];
                }
            }
        }
    }
    x
}
