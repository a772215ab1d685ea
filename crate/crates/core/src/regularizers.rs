//! Penalties `r(x)` and their proximal maps
//! `prox_{t r}(z) = argmin_x ½‖x − z‖² + t·r(x)`.

use serde::{Deserialize, Serialize};

use crate::error::{InvError, Result};
use crate::image::Image;

pub const DEFAULT_TV_ITERS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularizer {
    Zero,
    Tikhonov { lambda: f64 },
    L1 { lambda: f64 },
    /// Anisotropic total variation with periodic forward differences.
    Tv { lambda: f64, inner_iters: usize },
}

impl Regularizer {
    /// Parses `zero`, `tikhonov:<λ>`, `l1:<λ>`, `tv:<λ>` or `tv:<λ>:<iters>`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let lambda = |i: usize| -> Result<f64> {
            let v: f64 = parts
                .get(i)
                .ok_or_else(|| InvError::InvalidSpec(format!("regularizer `{s}` is missing lambda")))?
                .parse()
                .map_err(|_| InvError::InvalidSpec(format!("bad lambda in `{s}`")))?;
            if !(v >= 0.0) || !v.is_finite() {
                return Err(InvError::InvalidSpec(format!("lambda must be >= 0 in `{s}`")));
            }
            Ok(v)
        };
        match parts[0] {
            "zero" | "none" if parts.len() == 1 => Ok(Regularizer::Zero),
            "tikhonov" if parts.len() == 2 => Ok(Regularizer::Tikhonov { lambda: lambda(1)? }),
            "l1" if parts.len() == 2 => Ok(Regularizer::L1 { lambda: lambda(1)? }),
            "tv" if parts.len() == 2 || parts.len() == 3 => {
                let inner_iters = match parts.get(2) {
                    Some(v) => v.parse().map_err(|_| InvError::InvalidSpec(format!("bad tv iteration count in `{s}`")))?,
                    None => DEFAULT_TV_ITERS,
                };
                Ok(Regularizer::Tv { lambda: lambda(1)?, inner_iters })
            }
            other => Err(InvError::UnknownKind(other.to_string())),
        }
    }

    pub fn to_config_string(&self) -> String {
        match self {
            Regularizer::Zero => "zero".into(),
            Regularizer::Tikhonov { lambda } => format!("tikhonov:{lambda}"),
            Regularizer::L1 { lambda } => format!("l1:{lambda}"),
            Regularizer::Tv { lambda, inner_iters } => format!("tv:{lambda}:{inner_iters}"),
        }
    }

    pub fn value(&self, x: &Image) -> f64 {
        self.value_vec(x.data(), x.height(), x.width())
    }

    pub fn value_vec(&self, x: &[f64], h: usize, w: usize) -> f64 {
        match *self {
            Regularizer::Zero => 0.0,
            Regularizer::Tikhonov { lambda } => 0.5 * lambda * x.iter().map(|v| v * v).sum::<f64>(),
            Regularizer::L1 { lambda } => lambda * x.iter().map(|v| v.abs()).sum::<f64>(),
            Regularizer::Tv { lambda, .. } => lambda * anisotropic_tv(x, h, w),
        }
    }

    pub fn prox(&self, z: &Image, t: f64) -> Image {
        let data = self.prox_vec(z.data(), z.height(), z.width(), t);
        z.with_data(data).expect("prox preserves dims and finiteness")
    }

    pub fn prox_vec(&self, z: &[f64], h: usize, w: usize, t: f64) -> Vec<f64> {
        match *self {
            Regularizer::Zero => z.to_vec(),
            Regularizer::Tikhonov { lambda } => z.iter().map(|v| v / (1.0 + t * lambda)).collect(),
            Regularizer::L1 { lambda } => z.iter().map(|&v| soft_threshold(v, t * lambda)).collect(),
            Regularizer::Tv { lambda, inner_iters } => tv_prox(z, h, w, t * lambda, inner_iters),
        }
    }
}

pub fn soft_threshold(v: f64, tau: f64) -> f64 {
    v.signum() * (v.abs() - tau).max(0.0)
}

/// `Σ |x[i+1,j] − x[i,j]| + |x[i,j+1] − x[i,j]|` with wrap-around.
pub fn anisotropic_tv(x: &[f64], h: usize, w: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..h {
        for j in 0..w {
            let v = x[i * w + j];
            s += (x[((i + 1) % h) * w + j] - v).abs() + (x[i * w + (j + 1) % w] - v).abs();
        }
    }
    s
}

/// Forward differences `(Dv x, Dh x)`, periodic.
fn grad(x: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gv = vec![0.0; h * w];
    let mut gh = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let v = x[i * w + j];
            gv[i * w + j] = x[((i + 1) % h) * w + j] - v;
            gh[i * w + j] = x[i * w + (j + 1) % w] - v;
        }
    }
    (gv, gh)
}

/// `Dᵀ(pv, ph)`: negative periodic backward divergence.
fn grad_t(pv: &[f64], ph: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let k = i * w + j;
            out[k] = pv[((i + h - 1) % h) * w + j] - pv[k] + ph[i * w + (j + w - 1) % w] - ph[k];
        }
    }
    out
}

/// Projected gradient on the dual of `min ½‖x − z‖² + μ‖Dx‖₁`:
/// `p ← clip(p + τ D(z − Dᵀp), −μ, μ)`, `x = z − Dᵀp`, with `τ = 1/8 ≤ 1/‖D‖²`.
fn tv_prox(z: &[f64], h: usize, w: usize, mu: f64, iters: usize) -> Vec<f64> {
    if mu <= 0.0 || iters == 0 {
        return z.to_vec();
    }
    let tau = 0.125;
    let n = h * w;
    let mut pv = vec![0.0; n];
    let mut ph = vec![0.0; n];
    let mut x = z.to_vec();
    for _ in 0..iters {
        let (gv, gh) = grad(&x, h, w);
        for k in 0..n {
            pv[k] = (pv[k] + tau * gv[k]).clamp(-mu, mu);
            ph[k] = (ph[k] + tau * gh[k]).clamp(-mu, mu);
        }
        let dt = grad_t(&pv, &ph, h, w);
        x.iter_mut().zip(z).zip(&dt).for_each(|((xi, zi), di)| *xi = zi - di);
    }
    x
}

/// Convenience: `reg.value(x)`.
pub fn value(reg: &Regularizer, x: &Image) -> f64 {
    reg.value(x)
}

/// Convenience: `reg.prox(z, t)`.
pub fn prox(reg: &Regularizer, z: &Image, t: f64) -> Image {
    reg.prox(z, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(v: &[f64]) -> Image {
        Image::row(v.to_vec()).unwrap()
    }

    #[test]
    fn values_match_definitions() {
        assert_eq!(Regularizer::L1 { lambda: 1.0 }.value(&row(&[1.0, -2.0])), 3.0);
        assert_eq!(Regularizer::Tikhonov { lambda: 2.0 }.value(&row(&[1.0, 1.0])), 2.0);
        assert_eq!(Regularizer::Tv { lambda: 1.0, inner_iters: 20 }.value(&Image::filled(5, 4, 0.3)), 0.0);
        assert_eq!(Regularizer::Zero.value(&row(&[5.0])), 0.0);
        // periodic: [0, 1] has |1-0| + |0-1| horizontally
        assert_eq!(Regularizer::Tv { lambda: 0.5, inner_iters: 1 }.value(&row(&[0.0, 1.0])), 1.0);
    }

    #[test]
    fn closed_form_proxes() {
        let p = |r: Regularizer, z: f64, t: f64| r.prox(&row(&[z]), t).data()[0];
        assert_eq!(p(Regularizer::Tikhonov { lambda: 1.0 }, 2.0, 1.0), 1.0);
        assert_eq!(p(Regularizer::L1 { lambda: 1.0 }, 0.5, 1.0), 0.0);
        assert_eq!(p(Regularizer::L1 { lambda: 1.0 }, 2.0, 0.5), 1.5);
        assert_eq!(p(Regularizer::L1 { lambda: 1.0 }, -2.0, 0.5), -1.5);
        assert_eq!(p(Regularizer::Zero, 0.37, 3.0), 0.37);
    }

    #[test]
    fn parse_config_strings() {
        assert_eq!(Regularizer::parse("tv:0.1").unwrap(), Regularizer::Tv { lambda: 0.1, inner_iters: 20 });
        assert_eq!(Regularizer::parse("l1:0.05").unwrap(), Regularizer::L1 { lambda: 0.05 });
        assert_eq!(Regularizer::parse("tikhonov:1.0").unwrap(), Regularizer::Tikhonov { lambda: 1.0 });
        assert_eq!(Regularizer::parse("tv:0.2:50").unwrap(), Regularizer::Tv { lambda: 0.2, inner_iters: 50 });
        assert!(matches!(Regularizer::parse("wavelet:1"), Err(InvError::UnknownKind(_))));
        assert!(Regularizer::parse("l1:-1").is_err());
        assert!(Regularizer::parse("l1").is_err());
        for r in [Regularizer::Zero, Regularizer::L1 { lambda: 0.25 }, Regularizer::Tv { lambda: 0.1, inner_iters: 7 }] {
            assert_eq!(Regularizer::parse(&r.to_config_string()).unwrap(), r);
        }
    }

    #[test]
    fn tv_adjoint_pair() {
        let (h, w) = (5, 7);
        let x: Vec<f64> = (0..h * w).map(|k| (k as f64 * 0.61).sin()).collect();
        let pv: Vec<f64> = (0..h * w).map(|k| (k as f64 * 1.3).cos()).collect();
        let ph: Vec<f64> = (0..h * w).map(|k| (k as f64 * 0.2).sin()).collect();
        let (gv, gh) = grad(&x, h, w);
        let lhs: f64 = gv.iter().zip(&pv).chain(gh.iter().zip(&ph)).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(grad_t(&pv, &ph, h, w)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    fn objective(reg: &Regularizer, x: &[f64], z: &[f64], t: f64, h: usize, w: usize) -> f64 {
        0.5 * x.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + t * reg.value_vec(x, h, w)
    }

    proptest! {
        #[test]
        fn closed_form_prox_dominates_random_candidates(
            z in proptest::collection::vec(-2.0f64..2.0, 6),
            cands in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 6), 1000),
            lambda in 0.0f64..2.0,
            t in 0.01f64..3.0,
        ) {
            for reg in [Regularizer::Tikhonov { lambda }, Regularizer::L1 { lambda }] {
                let p = reg.prox_vec(&z, 2, 3, t);
                let best = objective(&reg, &p, &z, t, 2, 3);
                for c in &cands {
                    prop_assert!(best <= objective(&reg, c, &z, t, 2, 3) + 1e-12);
                }
            }
        }

        #[test]
        fn prox_is_nonexpansive(
            z1 in proptest::collection::vec(-1.0f64..1.0, 30),
            z2 in proptest::collection::vec(-1.0f64..1.0, 30),
            lambda in 0.0f64..1.0,
            t in 0.1f64..2.0,
        ) {
            for reg in [Regularizer::Zero, Regularizer::Tikhonov { lambda }, Regularizer::L1 { lambda }, Regularizer::Tv { lambda, inner_iters: 20 }] {
                let p1 = reg.prox_vec(&z1, 5, 6, t);
                let p2 = reg.prox_vec(&z2, 5, 6, t);
                let dp: f64 = p1.iter().zip(&p2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let dz: f64 = z1.iter().zip(&z2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                prop_assert!(dp <= dz * (1.0 + 1e-12), "{:?}: {} > {}", reg, dp, dz);
            }
        }

        #[test]
        fn tv_prox_decreases_objective(
            z in proptest::collection::vec(0.0f64..1.0, 64),
            lambda in 0.01f64..1.0,
            t in 0.1f64..2.0,
        ) {
            let reg = Regularizer::Tv { lambda, inner_iters: 20 };
            let p = reg.prox_vec(&z, 8, 8, t);
            prop_assert!(objective(&reg, &p, &z, t, 8, 8) <= t * reg.value_vec(&z, 8, 8) + 1e-12);
        }
    }

    #[test]
    fn tv_prox_zero_step_is_identity() {
        let z = vec![0.1, 0.9, 0.4, 0.2];
        assert_eq!(Regularizer::Tv { lambda: 1.0, inner_iters: 20 }.prox_vec(&z, 2, 2, 0.0), z);
    }
}
