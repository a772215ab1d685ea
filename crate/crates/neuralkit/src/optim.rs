//! First-order optimizers over collections of [`Tensor`] parameters.

use crate::error::{NeuralError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    step_count: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Self { kind, step_count: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// Applies one update to every trainable parameter, in iteration order.
    /// The order must be stable across calls since Adam state is positional.
    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = &'a mut Tensor>) -> Result<()> {
        let params: Vec<&mut Tensor> = params.into_iter().collect();
        for (i, p) in params.iter().enumerate() {
            if p.requires_grad && p.grad.is_none() {
                return Err(NeuralError::MissingGrad(i));
            }
        }
        self.step_count += 1;
        if self.first.len() < params.len() {
            for p in &params[self.first.len()..] {
                self.first.push(vec![0.0; p.len()]);
                self.second.push(vec![0.0; p.len()]);
            }
        }
        for (i, p) in params.into_iter().enumerate() {
            if !p.requires_grad {
                continue;
            }
            let g = p.grad.as_ref().expect("checked above");
            match self.kind {
                OptimizerKind::Sgd { lr } => {
                    p.data.iter_mut().zip(g).for_each(|(v, gv)| *v -= lr * gv);
                }
                OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                    let t = self.step_count as i32;
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    let (m, v) = (&mut self.first[i], &mut self.second[i]);
                    for k in 0..g.len() {
                        m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                        v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                        let mh = m[k] / c1;
                        let vh = v[k] / c2;
                        p.data[k] -= lr * mh / (vh.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
