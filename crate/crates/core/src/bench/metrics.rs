use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, InvError, Result};
use crate::image::Image;

/// Side length of the square SSIM window.
pub const SSIM_WINDOW: usize = 8;
/// Peak value used by [`ssim`].
pub const SSIM_PEAK: f64 = 1.0;
pub const SSIM_C1: f64 = (0.01 * SSIM_PEAK) * (0.01 * SSIM_PEAK);
pub const SSIM_C2: f64 = (0.03 * SSIM_PEAK) * (0.03 * SSIM_PEAK);
/// Human-readable SSIM settings stored with every report.
pub const SSIM_SETTINGS: &str = "window=8x8 stride=1 c1=(0.01*peak)^2 c2=(0.03*peak)^2 peak=1 sample_covariance";

/// Peak signal-to-noise ratio; zero error is flagged rather than encoded as a
/// float.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    pub fn is_infinite(self) -> bool {
        matches!(self, Psnr::Infinite)
    }

    /// Value in dB, `f64::INFINITY` for the flagged case.
    pub fn db(self) -> f64 {
        match self {
            Psnr::Finite(v) => v,
            Psnr::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v:.6}"),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

pub fn mse(reference: &Image, test: &Image) -> Result<f64> {
    if reference.dims() != test.dims() {
        return Err(InvError::DimensionMismatch { expected: reference.len(), got: test.len() });
    }
    check_len(reference.len(), test.len())?;
    let n = reference.len() as f64;
    Ok(reference.data().iter().zip(test.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

/// `10·log10(peak²/MSE)`.
pub fn psnr(reference: &Image, test: &Image, peak: f64) -> Result<Psnr> {
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(InvError::InvalidSpec(format!("psnr peak must be positive, got {peak}")));
    }
    let e = mse(reference, test)?;
    Ok(if e == 0.0 { Psnr::Infinite } else { Psnr::Finite(10.0 * (peak * peak / e).log10()) })
}

/// Mean SSIM over all 8×8 windows at stride 1, with sample (n−1) variances.
pub fn ssim(reference: &Image, test: &Image) -> Result<f64> {
    if reference.dims() != test.dims() {
        return Err(InvError::DimensionMismatch { expected: reference.len(), got: test.len() });
    }
    let (h, w) = reference.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(InvError::InvalidSpec(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}")));
    }
    let (a, b) = (reference.data(), test.data());
    let k = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for i0 in 0..=h - SSIM_WINDOW {
        for j0 in 0..=w - SSIM_WINDOW {
            let (mut sa, mut sb) = (0.0, 0.0);
            for i in i0..i0 + SSIM_WINDOW {
                for j in j0..j0 + SSIM_WINDOW {
                    sa += a[i * w + j];
                    sb += b[i * w + j];
                }
            }
            let (ma, mb) = (sa / k, sb / k);
            let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
            for i in i0..i0 + SSIM_WINDOW {
                for j in j0..j0 + SSIM_WINDOW {
                    let (da, db) = (a[i * w + j] - ma, b[i * w + j] - mb);
                    vaa += da * da;
                    vbb += db * db;
                    vab += da * db;
                }
            }
            let (vaa, vbb, vab) = (vaa / (k - 1.0), vbb / (k - 1.0), vab / (k - 1.0));
            total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * vab + SSIM_C2)) / ((ma * ma + mb * mb + SSIM_C1) * (vaa + vbb + SSIM_C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Per-pixel absolute error `|test − reference|`.
pub fn error_map(reference: &Image, test: &Image) -> Result<Image> {
    if reference.dims() != test.dims() {
        return Err(InvError::DimensionMismatch { expected: reference.len(), got: test.len() });
    }
    reference.with_data(reference.data().iter().zip(test.data()).map(|(a, b)| (b - a).abs()).collect())
}

/// Mean of `img` over the `size × size` block with top-left `(row, col)`.
pub fn region_mean(img: &Image, row: usize, col: usize, size: usize) -> Result<f64> {
    if size == 0 || row + size > img.height() || col + size > img.width() {
        return Err(InvError::InvalidSpec(format!("region {size}x{size} at ({row}, {col}) outside image")));
    }
    let mut s = 0.0;
    for i in row..row + size {
        for j in col..col + size {
            s += img.get(i, j);
        }
    }
    Ok(s / (size * size) as f64)
}

/// Median of finite-or-infinite values; NaN-free input expected.
pub fn median(values: &[f64]) -> f64 {
    crate::learned::median(values)
}
