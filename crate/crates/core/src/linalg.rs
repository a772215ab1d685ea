//! Small dense-vector helpers shared by the solvers.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], c: f64) -> Vec<f64> {
    a.iter().map(|x| x * c).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Conjugate gradients for a symmetric positive (semi)definite operator,
/// started from zero. Stops when `‖r‖ ≤ tol·‖b‖` or after `max_iters`.
/// Returns the solution and the number of iterations taken.
pub fn conjugate_gradient(apply: impl Fn(&[f64]) -> Vec<f64>, b: &[f64], tol: f64, max_iters: usize) -> (Vec<f64>, usize) {
    conjugate_gradient_from(apply, b, vec![0.0; b.len()], tol, max_iters)
}

/// As [`conjugate_gradient`] but warm-started at `x0`.
pub fn conjugate_gradient_from(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x0: Vec<f64>,
    tol: f64,
    max_iters: usize,
) -> (Vec<f64>, usize) {
    let mut x = x0;
    let ax = apply(&x);
    let mut r = sub(b, &ax);
    let mut p = r.clone();
    let mut rs = norm_sq(&r);
    let target = tol * norm(b);
    if rs.sqrt() <= target || rs == 0.0 {
        return (x, 0);
    }
    for it in 1..=max_iters {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return (x, it);
        }
        let alpha = rs / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rs_new = norm_sq(&r);
        if rs_new.sqrt() <= target || rs_new == 0.0 {
            return (x, it);
        }
        let beta = rs_new / rs;
        p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
        rs = rs_new;
    }
    (x, max_iters)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cg_solves_spd_system() {
        // [[4,1],[1,3]] x = [1,2] -> x = [1/11, 7/11]
        let a = |v: &[f64]| vec![4.0 * v[0] + v[1], v[0] + 3.0 * v[1]];
        let (x, _) = conjugate_gradient(a, &[1.0, 2.0], 1e-14, 10);
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-12);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-12);
    }
}
