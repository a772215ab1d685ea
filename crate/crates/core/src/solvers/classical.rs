use super::{
    check_inputs, default_step, ensure_finite_iterate, require_linear, ConvergenceMonitor, Denoiser, SolveConfig, SolveReport,
};
use crate::error::{check_finite, InvError, Result};
use crate::image::{Image, MeasurementVector};
use crate::linalg::{self, conjugate_gradient_from};
use crate::operators::ForwardOperator;
use crate::regularizers::Regularizer;

/// Relative residual used for the inner CG solves of ADMM.
const INNER_CG_TOL: f64 = 1e-12;

pub(crate) const RED_NOTE: &str =
    "RED gradient uses x - D(x), which assumes a locally homogeneous denoiser with symmetric Jacobian";

fn data_fit(op: &ForwardOperator, x: &[f64], y: &[f64]) -> Result<f64> {
    let r = linalg::sub(&op.forward(x)?, y);
    Ok(0.5 * linalg::norm_sq(&r))
}

fn normal_op<'a>(op: &'a ForwardOperator, shift: f64) -> impl Fn(&[f64]) -> Vec<f64> + 'a {
    move |v: &[f64]| {
        let mut out = op.transpose(&op.forward(v).expect("dims checked")).expect("dims checked");
        linalg::axpy(shift, v, &mut out);
        out
    }
}

fn to_image(op: &ForwardOperator, x: Vec<f64>) -> Result<Image> {
    let (h, w) = op.input_dims();
    Image::new(h, w, x)
}

/// Solves `(AᵀA + λI) x = Aᵀy` by conjugate gradients from zero.
///
/// With `λ = 0` and a rank-deficient `A` the zero start keeps every iterate
/// in the row space, so the result is the minimum-norm least-squares fit.
pub fn ml_least_squares(op: &ForwardOperator, y: &MeasurementVector, lambda: f64, cfg: &SolveConfig) -> Result<SolveReport> {
    cfg.validate()?;
    require_linear(op)?;
    check_inputs(op, y)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(InvError::InvalidSpec(format!("lambda must be >= 0, got {lambda}")));
    }
    let b = op.transpose(&y.data)?;
    let target = cfg.tol * linalg::norm(&b);
    let apply = normal_op(op, lambda);
    let objective = |x: &[f64]| -> Result<f64> { Ok(data_fit(op, x, &y.data)? + 0.5 * lambda * linalg::norm_sq(x)) };

    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs = linalg::norm_sq(&r);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = rs.sqrt() <= target;
    while !converged && iterations < cfg.max_iters {
        let ap = apply(&p);
        let pap = linalg::dot(&p, &ap);
        if pap <= 0.0 {
            // AᵀA + λI is singular along p: b has no component left to fit
            break;
        }
        let alpha = rs / pap;
        linalg::axpy(alpha, &p, &mut x);
        linalg::axpy(-alpha, &ap, &mut r);
        iterations += 1;
        ensure_finite_iterate(&x, "ml_least_squares", iterations)?;
        trace.push(objective(&x)?);
        let rs_new = linalg::norm_sq(&r);
        if rs_new.sqrt() <= target {
            converged = true;
            break;
        }
        let beta = rs_new / rs;
        p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
        rs = rs_new;
    }
    Ok(SolveReport {
        reconstruction: to_image(op, x)?,
        objective_trace: trace,
        residual_trace: Vec::new(),
        iterations_run: iterations,
        converged,
        restarts: Vec::new(),
        notes: Vec::new(),
    })
}

/// `x ← prox_{ηr}(x − η Aᵀ(Ax − y))` from `x⁰ = 0`.
pub fn prox_gradient(op: &ForwardOperator, y: &MeasurementVector, reg: &Regularizer, cfg: &SolveConfig) -> Result<SolveReport> {
    cfg.validate()?;
    require_linear(op)?;
    check_inputs(op, y)?;
    let eta = default_step(op, cfg)?;
    let (h, w) = op.input_dims();
    let mut x = vec![0.0; op.input_len()];
    let mut monitor = ConvergenceMonitor::new(cfg.tol);
    let mut trace = Vec::with_capacity(cfg.max_iters);
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=cfg.max_iters {
        let resid = linalg::sub(&op.forward(&x)?, &y.data);
        let g = op.transpose(&resid)?;
        let mut z = x.clone();
        linalg::axpy(-eta, &g, &mut z);
        x = reg.prox_vec(&z, h, w, eta);
        ensure_finite_iterate(&x, "prox_gradient", k)?;
        let obj = data_fit(op, &x, &y.data)? + reg.value_vec(&x, h, w);
        trace.push(obj);
        iterations = k;
        if monitor.update(obj) {
            converged = true;
            break;
        }
    }
    Ok(SolveReport {
        reconstruction: to_image(op, x)?,
        objective_trace: trace,
        residual_trace: Vec::new(),
        iterations_run: iterations,
        converged,
        restarts: Vec::new(),
        notes: vec![format!("step size {eta:e}")],
    })
}

/// Scaled-form ADMM for `½‖Ax − y‖² + g(v)` subject to `x = v`:
/// `x ← (AᵀA + ρI)⁻¹(Aᵀy + ρ(v − u))`, `v ← step(x + u)`, `u ← u + x − v`.
fn admm_core(
    op: &ForwardOperator,
    y: &MeasurementVector,
    rho: f64,
    cfg: &SolveConfig,
    name: &str,
    mut v_step: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    objective: impl Fn(&[f64]) -> Result<f64>,
) -> Result<SolveReport> {
    cfg.validate()?;
    require_linear(op)?;
    check_inputs(op, y)?;
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(InvError::InvalidSpec(format!("rho must be > 0, got {rho}")));
    }
    let n = op.input_len();
    let aty = op.transpose(&y.data)?;
    let apply = normal_op(op, rho);
    let mut x = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut monitor = ConvergenceMonitor::new(cfg.tol);
    let mut trace = Vec::new();
    let mut residuals = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=cfg.max_iters {
        let mut rhs = aty.clone();
        linalg::axpy(rho, &linalg::sub(&v, &u), &mut rhs);
        // CG caps at 4n iterations; the system is SPD so it terminates well before in exact arithmetic
        x = conjugate_gradient_from(&apply, &rhs, x, INNER_CG_TOL, 4 * n).0;
        ensure_finite_iterate(&x, name, k)?;
        let xu = linalg::add(&x, &u);
        v = v_step(&xu)?;
        check_finite(name, &v).map_err(|_| InvError::Divergence(format!("{name}: non-finite prox/denoiser output at iteration {k}")))?;
        u = linalg::sub(&xu, &v);
        let obj = objective(&x)?;
        let res = linalg::dist(&x, &v);
        trace.push(obj);
        residuals.push(res);
        iterations = k;
        let small_residual = res <= cfg.tol.sqrt() * linalg::norm(&x).max(1e-12);
        if monitor.update(obj) && small_residual {
            converged = true;
            break;
        }
    }
    Ok(SolveReport {
        reconstruction: to_image(op, x)?,
        objective_trace: trace,
        residual_trace: residuals,
        iterations_run: iterations,
        converged,
        restarts: Vec::new(),
        notes: vec![format!("admm rho {rho}")],
    })
}

/// ADMM with the regularizer's proximal map as the `v` step (step `1/ρ`).
pub fn admm(op: &ForwardOperator, y: &MeasurementVector, reg: &Regularizer, rho: f64, cfg: &SolveConfig) -> Result<SolveReport> {
    let (h, w) = op.input_dims();
    admm_core(
        op,
        y,
        rho,
        cfg,
        "admm",
        |z| Ok(reg.prox_vec(z, h, w, 1.0 / rho)),
        |x| Ok(data_fit(op, x, &y.data)? + reg.value_vec(x, h, w)),
    )
}

/// Plug-and-play ADMM: the proximal step is replaced by `denoiser`. No
/// convergence guarantee; the objective trace holds the data fit only.
pub fn pnp_admm(op: &ForwardOperator, y: &MeasurementVector, denoiser: &dyn Denoiser, rho: f64, cfg: &SolveConfig) -> Result<SolveReport> {
    let (h, w) = op.input_dims();
    let mut report = admm_core(
        op,
        y,
        rho,
        cfg,
        "pnp_admm",
        |z| Ok(denoiser.denoise(&Image::new(h, w, z.to_vec())?)?.into_data()),
        |x| data_fit(op, x, &y.data),
    )?;
    report.notes.push("plug-and-play: objective trace is the data fit ½‖Ax−y‖²".into());
    Ok(report)
}

/// Gradient descent on `½‖Ax − y‖² + (λ/2) xᵀ(x − D(x))` with gradient
/// `Aᵀ(Ax − y) + λ(x − D(x))`. Stops when the gradient norm falls below
/// `tol·‖Aᵀy‖`.
pub fn red_solve(op: &ForwardOperator, y: &MeasurementVector, denoiser: &dyn Denoiser, lambda: f64, cfg: &SolveConfig) -> Result<SolveReport> {
    cfg.validate()?;
    require_linear(op)?;
    check_inputs(op, y)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(InvError::InvalidSpec(format!("lambda must be >= 0, got {lambda}")));
    }
    let eta = match cfg.step_size {
        Some(e) => e,
        None => {
            let l = super::estimate_norm_sq(op, super::POWER_ITERS, cfg.seed)?;
            super::DEFAULT_STEP_FRACTION / (l + 2.0 * lambda)
        }
    };
    let (h, w) = op.input_dims();
    let aty = op.transpose(&y.data)?;
    let target = cfg.tol * linalg::norm(&aty);
    let mut x = vec![0.0; op.input_len()];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=cfg.max_iters {
        let d = denoiser.denoise(&Image::new(h, w, x.clone())?)?.into_data();
        check_finite("red", &d).map_err(|_| InvError::Divergence(format!("red: non-finite denoiser output at iteration {k}")))?;
        let xd = linalg::sub(&x, &d);
        let mut g = op.transpose(&linalg::sub(&op.forward(&x)?, &y.data))?;
        linalg::axpy(lambda, &xd, &mut g);
        if linalg::norm(&g) <= target {
            converged = true;
            break;
        }
        linalg::axpy(-eta, &g, &mut x);
        ensure_finite_iterate(&x, "red", k)?;
        iterations = k;
        trace.push(data_fit(op, &x, &y.data)? + 0.5 * lambda * linalg::dot(&x, &xd));
    }
    Ok(SolveReport {
        reconstruction: to_image(op, x)?,
        objective_trace: trace,
        residual_trace: Vec::new(),
        iterations_run: iterations,
        converged,
        restarts: Vec::new(),
        notes: vec![RED_NOTE.to_string(), format!("step size {eta:e}")],
    })
}
