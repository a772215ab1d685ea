//! Risk estimates that need no ground truth: SURE for denoising and GSURE
//! for general linear measurements.

use rand::Rng;

use crate::error::{check_finite, InvError, Result};
use crate::linalg;
use crate::operators::ForwardOperator;
use crate::rng;

/// How `Σᵢ ∂fᵢ/∂yᵢ` (or its generalized form) is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DivergenceMode {
    /// Jacobian columns from `f(eⱼ) − f(0)`: exact for linear (and affine)
    /// estimators, one evaluation per measurement.
    ExactLinear,
    /// Averages `bᵀ(f(y + εb) − f(y))/ε` over seeded Rademacher probes `b`.
    MonteCarlo { probes: usize, eps: f64, seed: u64 },
}

impl DivergenceMode {
    /// Parses `exact` or `mc:<probes>:<eps>`; the seed comes from the caller.
    pub fn parse(s: &str, seed: u64) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["exact"] => Ok(DivergenceMode::ExactLinear),
            ["mc", p, e] => {
                let probes: usize = p.parse().map_err(|_| InvError::InvalidSpec(format!("bad probe count `{p}`")))?;
                let eps: f64 = e.parse().map_err(|_| InvError::InvalidSpec(format!("bad probe step `{e}`")))?;
                let mode = DivergenceMode::MonteCarlo { probes, eps, seed };
                mode.validate()?;
                Ok(mode)
            }
            _ => Err(InvError::InvalidSpec(format!("divergence mode `{s}` (expected exact or mc:<probes>:<eps>)"))),
        }
    }

    fn validate(&self) -> Result<()> {
        if let DivergenceMode::MonteCarlo { probes, eps, .. } = *self {
            if probes == 0 || !(eps > 0.0) || !eps.is_finite() {
                return Err(InvError::InvalidSpec(format!("monte carlo divergence needs probes >= 1 and eps > 0 (got {probes}, {eps})")));
            }
        }
        Ok(())
    }
}

pub(crate) fn rademacher(seed: u64, n: usize) -> Vec<f64> {
    let mut g = rng::rng(seed);
    (0..n).map(|_| if g.random_bool(0.5) { 1.0 } else { -1.0 }).collect()
}

/// Probe `k` of a Monte Carlo run; probes are independent streams of `seed`.
pub(crate) fn probe(seed: u64, k: usize, n: usize) -> Vec<f64> {
    rademacher(rng::derive_seed(seed, k as u64), n)
}

type Estimator<'a> = &'a dyn Fn(&[f64]) -> Result<Vec<f64>>;

fn eval(f: Estimator, y: &[f64], n_out: Option<usize>) -> Result<Vec<f64>> {
    let v = f(y)?;
    if let Some(n) = n_out {
        if v.len() != n {
            return Err(InvError::DimensionMismatch { expected: n, got: v.len() });
        }
    }
    check_finite("estimator output", &v)?;
    Ok(v)
}

/// `Σᵢⱼ Wᵢⱼ ∂fᵢ/∂yⱼ` where `weight(b)` returns `Wb`. With `W = I` this is
/// the ordinary divergence; GSURE uses `W = A†`.
fn weighted_divergence(f: Estimator, y: &[f64], n_out: usize, weight: &dyn Fn(&[f64]) -> Result<Vec<f64>>, mode: DivergenceMode) -> Result<f64> {
    mode.validate()?;
    let m = y.len();
    match mode {
        DivergenceMode::ExactLinear => {
            let f0 = eval(f, &vec![0.0; m], Some(n_out))?;
            let mut total = 0.0;
            let mut e = vec![0.0; m];
            for j in 0..m {
                e[j] = 1.0;
                let col = linalg::sub(&eval(f, &e, Some(n_out))?, &f0);
                total += linalg::dot(&weight(&e)?, &col);
                e[j] = 0.0;
            }
            Ok(total)
        }
        DivergenceMode::MonteCarlo { probes, eps, seed } => {
            let fy = eval(f, y, Some(n_out))?;
            let mut total = 0.0;
            for k in 0..probes {
                let b = probe(seed, k, m);
                let mut yp = y.to_vec();
                linalg::axpy(eps, &b, &mut yp);
                let diff = linalg::sub(&eval(f, &yp, Some(n_out))?, &fy);
                total += linalg::dot(&weight(&b)?, &diff) / eps;
            }
            Ok(total / probes as f64)
        }
    }
}

/// `div_y f(y) = Σᵢ ∂fᵢ/∂yᵢ` for `f: ℝⁿ → ℝⁿ`.
pub fn divergence(f: Estimator, y: &[f64], mode: DivergenceMode) -> Result<f64> {
    weighted_divergence(f, y, y.len(), &|b: &[f64]| Ok(b.to_vec()), mode)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(InvError::InvalidSpec(format!("sigma must be > 0, got {sigma}")));
    }
    Ok(())
}

/// `(1/n)‖y − f(y)‖² + (2σ²/n) div_y f(y) − σ²`, an unbiased estimate of
/// `(1/n)E‖x − f(y)‖²` when `y = x + N(0, σ²I)`.
pub fn sure_loss(f: Estimator, y: &[f64], sigma: f64, mode: DivergenceMode) -> Result<f64> {
    check_sigma(sigma)?;
    check_finite("measurements", y)?;
    let n = y.len() as f64;
    let fy = eval(f, y, Some(y.len()))?;
    let div = divergence(f, y, mode)?;
    Ok(linalg::dist(y, &fy).powi(2) / n + 2.0 * sigma * sigma * div / n - sigma * sigma)
}

/// Minimum-norm pseudoinverse `A†` of a linear operator, applied by
/// conjugate gradients on the normal equations from zero.
#[derive(Debug, Clone, Copy)]
pub struct Pseudoinverse<'a> {
    pub op: &'a ForwardOperator,
    pub tol: f64,
    pub max_iters: usize,
}

impl<'a> Pseudoinverse<'a> {
    pub fn new(op: &'a ForwardOperator) -> Result<Self> {
        if !op.is_linear() {
            return Err(InvError::Unsupported(format!("pseudoinverse of nonlinear {}", op.name())));
        }
        Ok(Self { op, tol: 1e-12, max_iters: 10 * op.input_len().max(10) })
    }

    /// `A†v` for a measurement-space `v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.op.output_len() {
            return Err(InvError::DimensionMismatch { expected: self.op.output_len(), got: v.len() });
        }
        let b = self.op.transpose(v)?;
        if linalg::norm(&b) == 0.0 {
            return Ok(vec![0.0; b.len()]);
        }
        let op = self.op;
        let normal = |u: &[f64]| op.transpose(&op.forward(u).expect("dims checked")).expect("dims checked");
        let (x, _) = linalg::conjugate_gradient(normal, &b, self.tol, self.max_iters);
        check_finite("pseudoinverse", &x).map_err(|_| InvError::Divergence("pseudoinverse CG produced non-finite values".into()))?;
        let res = linalg::dist(&normal(&x), &b);
        if res > 1e-6 * linalg::norm(&b) {
            return Err(InvError::Divergence(format!("pseudoinverse CG did not converge (residual {res:e})")));
        }
        Ok(x)
    }

    /// Orthogonal projection `P = A†A` onto the row space of `A`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.apply(&self.op.forward(x)?)
    }
}

/// Description of the term [`gsure_loss`] leaves out.
pub const GSURE_OMITTED_TERM: &str = "‖P x⋆‖²/n is independent of the estimator and omitted";

#[derive(Debug, Clone, PartialEq)]
pub struct GsureEstimate {
    pub value: f64,
    /// Generalized divergence `Σᵢⱼ (A†)ᵢⱼ ∂fᵢ/∂yⱼ`.
    pub divergence: f64,
    pub note: &'static str,
}

/// Estimator-dependent part of the projected risk `(1/n)E‖P(x⋆ − f(y))‖²`:
/// `(1/n)[‖P f(y)‖² − 2 f(y)ᵀA†y + 2σ² Σᵢⱼ (A†)ᵢⱼ ∂fᵢ/∂yⱼ]` with `f: ℝᵐ → ℝⁿ`.
pub fn gsure_loss(f: Estimator, y: &[f64], sigma: f64, pinv: &Pseudoinverse, mode: DivergenceMode) -> Result<GsureEstimate> {
    check_sigma(sigma)?;
    check_finite("measurements", y)?;
    let n = pinv.op.input_len();
    let fy = eval(f, y, Some(n))?;
    let x_ml = pinv.apply(y)?;
    let pf = pinv.project(&fy)?;
    let div = weighted_divergence(f, y, n, &|b: &[f64]| pinv.apply(b), mode)?;
    let value = (linalg::norm_sq(&pf) - 2.0 * linalg::dot(&fy, &x_ml) + 2.0 * sigma * sigma * div) / n as f64;
    Ok(GsureEstimate { value, divergence: div, note: GSURE_OMITTED_TERM })
}
