use super::{check_inputs, estimate_norm_sq, ConvergenceMonitor, RestartOutcome, SolveConfig, SolveReport, POWER_ITERS};
use crate::error::{InvError, Result};
use crate::image::{Image, MeasurementVector};
use crate::linalg;
use crate::operators::ForwardOperator;
use crate::rng;

const ARMIJO_C: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;

fn objective(op: &ForwardOperator, x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(0.5 * linalg::dist(&op.forward(x)?, y).powi(2))
}

struct Run {
    x: Vec<f64>,
    trace: Vec<f64>,
    initial: f64,
    iterations: usize,
    converged: bool,
}

/// Backtracking gradient descent from `x`. The trial step doubles after each
/// accepted iteration and halves until the Armijo condition holds.
fn descend(op: &ForwardOperator, y: &[f64], mut x: Vec<f64>, eta0: f64, cfg: &SolveConfig) -> Result<Run> {
    let initial = objective(op, &x, y)?;
    let floor = 1e-30 * linalg::norm_sq(y).max(f64::MIN_POSITIVE);
    let mut f = initial;
    let mut eta = eta0;
    let mut monitor = ConvergenceMonitor::new(cfg.tol);
    let mut trace = Vec::new();
    let mut converged = f <= floor;
    let mut iterations = 0;
    while !converged && iterations < cfg.max_iters {
        let resid: Vec<f64> = op.forward(&x)?.iter().zip(y).map(|(a, b)| a - b).collect();
        let g = op.jtvp_vec(&x, &resid)?;
        let gg = linalg::norm_sq(&g);
        if gg == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial = x.clone();
            linalg::axpy(-eta, &g, &mut trial);
            let ft = objective(op, &trial, y)?;
            if ft.is_finite() && ft <= f - ARMIJO_C * eta * gg {
                accepted = Some((trial, ft));
                break;
            }
            eta *= 0.5;
        }
        let Some((next, fnext)) = accepted else {
            // no descent at any step size: x is stationary to working precision
            converged = true;
            break;
        };
        x = next;
        f = fnext;
        eta *= 2.0;
        iterations += 1;
        trace.push(f);
        converged = f <= floor || monitor.update(f);
    }
    Ok(Run { x, trace, initial, iterations, converged })
}

/// Minimises `½‖y − (Ax)²‖²` by gradient descent from `restarts` seeded
/// random starts and keeps the run with the lowest final objective. The
/// result is defined only up to sign.
pub fn phase_retrieval_gd(op: &ForwardOperator, y: &MeasurementVector, restarts: usize, cfg: &SolveConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let inner = op
        .inner()
        .ok_or_else(|| InvError::Unsupported(format!("phase_retrieval_gd needs a phase_retrieval operator, got {}", op.name())))?;
    check_inputs(op, y)?;
    if restarts == 0 {
        return Err(InvError::InvalidSpec("restarts must be >= 1".into()));
    }
    let n = op.input_len();
    let (h, w) = op.input_dims();
    let norm_sq = estimate_norm_sq(inner, POWER_ITERS, cfg.seed)?;
    let mean_y = y.data.iter().sum::<f64>() / y.len() as f64;
    // (Ax)² has mean ≈ ‖A‖²‖x‖²/n for a spread-out x; match that energy
    let scale = if norm_sq > 0.0 && mean_y > 0.0 { (mean_y / norm_sq).sqrt() } else { 0.0 };
    let eta0 = cfg.step_size.unwrap_or_else(|| 1.0 / (norm_sq * (mean_y.abs() + norm_sq * scale * scale)).max(f64::MIN_POSITIVE));

    let mut best: Option<Run> = None;
    let mut outcomes = Vec::with_capacity(restarts);
    let mut diverged = 0;
    for r in 0..restarts {
        let mut g = rng::rng(rng::derive_seed(cfg.seed, r as u64));
        let x0 = linalg::scale(&rng::gaussian_vec(&mut g, n), scale);
        match descend(op, &y.data, x0, eta0, cfg) {
            Ok(run) if run.x.iter().all(|v| v.is_finite()) => {
                let fin = run.trace.last().copied().unwrap_or(run.initial);
                outcomes.push(RestartOutcome { initial_objective: run.initial, final_objective: fin });
                let better = best.as_ref().is_none_or(|b| fin < b.trace.last().copied().unwrap_or(b.initial));
                if better {
                    best = Some(run);
                }
            }
            Ok(_) | Err(InvError::NonFinite(_)) => {
                diverged += 1;
                outcomes.push(RestartOutcome { initial_objective: f64::NAN, final_objective: f64::NAN });
            }
            Err(e) => return Err(e),
        }
    }
    let run = best.ok_or_else(|| InvError::Divergence(format!("phase_retrieval_gd: all {restarts} restarts diverged")))?;
    let mut notes = vec!["reconstruction is determined up to a global sign".to_string()];
    if diverged > 0 {
        notes.push(format!("{diverged} restart(s) diverged"));
    }
    Ok(SolveReport {
        reconstruction: Image::new(h, w, run.x)?,
        objective_trace: run.trace,
        residual_trace: Vec::new(),
        iterations_run: run.iterations,
        converged: run.converged,
        restarts: outcomes,
        notes,
    })
}
