//! Single-coil Cartesian MRI, `A = S F D`: coil sensitivity, unitary 2-D DFT,
//! k-space row selection. Complex measurements are returned as the real parts
//! of the selected samples followed by their imaginary parts.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub(crate) struct Mri {
    h: usize,
    w: usize,
    selected: Vec<usize>,
    sensitivity: Vec<f64>,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Mri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Mri")
            .field("h", &self.h)
            .field("w", &self.w)
            .field("samples", &self.selected.len())
            .finish()
    }
}

impl Mri {
    pub(crate) fn new(h: usize, w: usize, selected: Vec<usize>, sensitivity: Vec<f64>) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            h,
            w,
            selected,
            sensitivity,
            row_fwd: planner.plan_fft_forward(w),
            row_inv: planner.plan_fft_inverse(w),
            col_fwd: planner.plan_fft_forward(h),
            col_inv: planner.plan_fft_inverse(h),
        }
    }

    fn fft2(&self, buf: &mut [Complex64], inverse: bool) {
        let (h, w) = (self.h, self.w);
        let (row, col) = if inverse { (&self.row_inv, &self.col_inv) } else { (&self.row_fwd, &self.col_fwd) };
        for r in buf.chunks_exact_mut(w) {
            row.process(r);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); h];
        for j in 0..w {
            for i in 0..h {
                column[i] = buf[i * w + j];
            }
            col.process(&mut column);
            for i in 0..h {
                buf[i * w + j] = column[i];
            }
        }
        let s = 1.0 / ((h * w) as f64).sqrt();
        buf.iter_mut().for_each(|v| *v *= s);
    }

    pub(crate) fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = x.iter().zip(&self.sensitivity).map(|(v, s)| Complex64::new(v * s, 0.0)).collect();
        self.fft2(&mut buf, false);
        let m = self.selected.len();
        let mut out = vec![0.0; 2 * m];
        for (k, &i) in self.selected.iter().enumerate() {
            out[k] = buf[i].re;
            out[m + k] = buf[i].im;
        }
        out
    }

    pub(crate) fn transpose(&self, u: &[f64]) -> Vec<f64> {
        let m = self.selected.len();
        let mut buf = vec![Complex64::new(0.0, 0.0); self.h * self.w];
        for (k, &i) in self.selected.iter().enumerate() {
            buf[i] = Complex64::new(u[k], u[m + k]);
        }
        self.fft2(&mut buf, true);
        buf.iter().zip(&self.sensitivity).map(|(v, s)| v.re * s).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_sampling_preserves_energy() {
        let (h, w) = (4, 6);
        let mri = Mri::new(h, w, (0..h * w).collect(), vec![1.0; h * w]);
        let x: Vec<f64> = (0..h * w).map(|v| (v as f64 * 0.37).sin()).collect();
        let y = mri.forward(&x);
        let ex: f64 = x.iter().map(|v| v * v).sum();
        let ey: f64 = y.iter().map(|v| v * v).sum();
        assert!((ex - ey).abs() < 1e-12);
        // full sampling: AᵀA = I on real images
        let back = mri.transpose(&y);
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dc_coefficient_is_scaled_sum() {
        let mri = Mri::new(2, 2, vec![0], vec![1.0; 4]);
        let y = mri.forward(&[1.0, 2.0, 3.0, 4.0]);
        assert!((y[0] - 10.0 / 2.0).abs() < 1e-14);
        assert!(y[1].abs() < 1e-14);
    }
}
