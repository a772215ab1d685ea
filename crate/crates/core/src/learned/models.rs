use std::sync::Arc;

use invkit_neuralkit::{LayerSpec, Network, Tape, Tensor, Var};

use super::ApproxInverse;
use crate::error::{InvError, Result};
use crate::image::{Image, MeasurementVector};
use crate::linalg;
use crate::operators::ForwardOperator;

/// A trainable map from measurements to images.
///
/// Training evaluates `record(prepare(y))` on a fresh tape per sample;
/// `prepare` holds any fixed, parameter-free preprocessing so it can be
/// computed once per sample.
pub trait Reconstructor: Sync {
    fn image_dims(&self) -> (usize, usize);
    /// Trainable tensors in a fixed order.
    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;
    fn prepare(&self, y: &[f64]) -> Result<Vec<f64>>;
    /// Records the reconstruction (shape `[1, H, W]`) given parameter leaves
    /// bound in [`Reconstructor::params`] order.
    fn record(&self, tape: &mut Tape, params: &[Var], input: &[f64]) -> Result<Var>;

    fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params().into_iter().map(|p| tape.leaf(p)).collect()
    }

    fn reconstruct_vec(&self, y: &[f64]) -> Result<Vec<f64>> {
        let input = self.prepare(y)?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let out = self.record(&mut tape, &vars, &input)?;
        Ok(tape.value(out).to_vec())
    }

    fn reconstruct(&self, y: &MeasurementVector) -> Result<Image> {
        let (h, w) = self.image_dims();
        Image::new(h, w, self.reconstruct_vec(&y.data)?)
    }

    fn flat_params(&self) -> Vec<f64> {
        self.params().into_iter().flat_map(|p| p.data.iter().copied()).collect()
    }

    fn load_flat(&mut self, values: &[f64]) -> Result<()> {
        let total: usize = self.params().iter().map(|p| p.len()).sum();
        if total != values.len() {
            return Err(InvError::InvalidSpec(format!("checkpoint holds {} values, model has {total}", values.len())));
        }
        let mut offset = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.data.copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }
}

/// Convolutional body `1 → c → … → c → 1` (3×3 kernels, relu between) with
/// no skip connection; [`ResidualModel`] adds the skip.
pub fn residual_body(channels: usize, depth: usize, seed: u64) -> Result<Network> {
    if channels == 0 || depth < 2 {
        return Err(InvError::InvalidSpec(format!("residual body needs channels >= 1 and depth >= 2 (got {channels}, {depth})")));
    }
    let mut specs = vec![LayerSpec::Conv2d { in_channels: 1, out_channels: channels, kernel: 3 }, LayerSpec::Relu];
    for _ in 0..depth - 2 {
        specs.push(LayerSpec::Conv2d { in_channels: channels, out_channels: channels, kernel: 3 });
        specs.push(LayerSpec::Relu);
    }
    specs.push(LayerSpec::Conv2d { in_channels: channels, out_channels: 1, kernel: 3 });
    Ok(Network::new(None, specs, seed)?)
}

/// `f(y) = g(Ã⁻¹y) + Ã⁻¹y`.
#[derive(Debug, Clone)]
pub struct ResidualModel {
    pub body: Network,
    pub inverse: ApproxInverse,
    op: Arc<ForwardOperator>,
}

impl ResidualModel {
    pub fn new(op: Arc<ForwardOperator>, body: Network, inverse: ApproxInverse) -> Result<Self> {
        if !op.is_linear() {
            return Err(InvError::Unsupported(format!("residual model over nonlinear {}", op.name())));
        }
        Ok(Self { body, inverse, op })
    }

    pub fn operator(&self) -> &ForwardOperator {
        &self.op
    }
}

impl Reconstructor for ResidualModel {
    fn image_dims(&self) -> (usize, usize) {
        self.op.input_dims()
    }

    fn params(&self) -> Vec<&Tensor> {
        self.body.params().iter().collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.body.params_mut().iter_mut().collect()
    }

    fn prepare(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.inverse.apply_vec(&self.op, y)
    }

    fn record(&self, tape: &mut Tape, params: &[Var], input: &[f64]) -> Result<Var> {
        let (h, w) = self.op.input_dims();
        let x = tape.constant(vec![1, h, w], input.to_vec());
        let g = self.body.forward_with(tape, params, x)?;
        Ok(tape.add(x, g)?)
    }
}

/// Evaluates `g(Ã⁻¹y) + Ã⁻¹y` for a body network `g`.
pub fn residual_reconstruct(body: &Network, inverse: &ApproxInverse, op: &ForwardOperator, y: &MeasurementVector) -> Result<Image> {
    let (h, w) = op.input_dims();
    let base = inverse.apply_vec(op, &y.data)?;
    let g = body.predict(&[1, h, w], &base)?;
    if g.len() != base.len() {
        return Err(InvError::DimensionMismatch { expected: base.len(), got: g.len() });
    }
    Image::new(h, w, linalg::add(&g, &base))
}

/// `K` proximal-gradient blocks `x ← P(x − ηAᵀ(Ax − y))` from `x = 0` sharing
/// one prox network. The step is stored as `log η` so it stays positive.
#[derive(Debug, Clone)]
pub struct UnrolledModel {
    pub blocks: usize,
    pub prox: Network,
    pub log_eta: Tensor,
    op: Arc<ForwardOperator>,
}

impl UnrolledModel {
    pub fn new(op: Arc<ForwardOperator>, prox: Network, blocks: usize, eta: f64) -> Result<Self> {
        if blocks == 0 {
            return Err(InvError::InvalidSpec("unrolled model needs at least one block".into()));
        }
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(InvError::InvalidSpec(format!("initial step must be > 0, got {eta}")));
        }
        if !op.is_linear() {
            return Err(InvError::Unsupported(format!("unrolled model over nonlinear {}", op.name())));
        }
        Ok(Self { blocks, prox, log_eta: Tensor::scalar(eta.ln()).with_grad(), op })
    }

    pub fn eta(&self) -> f64 {
        self.log_eta.data[0].exp()
    }

    pub fn operator(&self) -> &ForwardOperator {
        &self.op
    }
}

impl Reconstructor for UnrolledModel {
    fn image_dims(&self) -> (usize, usize) {
        self.op.input_dims()
    }

    fn params(&self) -> Vec<&Tensor> {
        let mut v: Vec<&Tensor> = self.prox.params().iter().collect();
        v.push(&self.log_eta);
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = self.prox.params_mut().iter_mut().collect();
        v.push(&mut self.log_eta);
        v
    }

    fn prepare(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.op.output_len() {
            return Err(InvError::DimensionMismatch { expected: self.op.output_len(), got: y.len() });
        }
        Ok(y.to_vec())
    }

    fn record(&self, tape: &mut Tape, params: &[Var], y: &[f64]) -> Result<Var> {
        let (h, w) = self.op.input_dims();
        let (prox_params, log_eta) = params.split_at(params.len() - 1);
        let eta = tape.exp(log_eta[0])?;
        let mut x = tape.constant(vec![1, h, w], vec![0.0; h * w]);
        for _ in 0..self.blocks {
            let resid = linalg::sub(&self.op.forward(tape.value(x))?, y);
            let grad = self.op.transpose(&resid)?;
            let op = Arc::clone(&self.op);
            // d/dx Aᵀ(Ax − y) = AᵀA, which is symmetric
            let g = tape.custom(x, grad, vec![1, h, w], move |u| {
                op.transpose(&op.forward(u).expect("image-sized cotangent")).expect("measurement-sized vector")
            })?;
            let step = tape.scale_by(g, eta)?;
            let z = tape.sub(x, step)?;
            x = self.prox.forward_with(tape, prox_params, z)?;
        }
        Ok(x)
    }
}

/// Runs the unrolled model on one measurement.
pub fn unrolled_forward(model: &UnrolledModel, y: &MeasurementVector) -> Result<Image> {
    model.reconstruct(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{make_operator, OperatorSpec};
    use invkit_neuralkit::build_denoiser;

    fn identity_prox(seed: u64) -> Network {
        let mut n = build_denoiser(2, 2, seed).unwrap();
        n.zero_last_layer();
        n
    }

    #[test]
    fn single_block_identity_step_returns_y() {
        let op = Arc::new(make_operator(&OperatorSpec::Identity { height: 2, width: 3 }).unwrap());
        let model = UnrolledModel::new(op, identity_prox(1), 1, 1.0).unwrap();
        let y = MeasurementVector::new(vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6], "identity");
        assert_eq!(unrolled_forward(&model, &y).unwrap().data(), y.data.as_slice());
    }

    #[test]
    fn zero_body_residual_is_approx_inverse() {
        let op = make_operator(&OperatorSpec::Identity { height: 3, width: 3 }).unwrap();
        let mut body = residual_body(3, 3, 2).unwrap();
        body.zero_last_layer();
        let y = MeasurementVector::new((0..9).map(|k| k as f64 * 0.1).collect(), "identity");
        let out = residual_reconstruct(&body, &ApproxInverse::Adjoint, &op, &y).unwrap();
        assert_eq!(out.data(), y.data.as_slice());
    }

    #[test]
    fn flat_params_roundtrip() {
        let op = Arc::new(make_operator(&OperatorSpec::Identity { height: 2, width: 2 }).unwrap());
        let mut model = UnrolledModel::new(op, build_denoiser(2, 2, 3).unwrap(), 2, 0.5).unwrap();
        let flat = model.flat_params();
        assert_eq!(*flat.last().unwrap(), 0.5f64.ln());
        let doubled: Vec<f64> = flat.iter().map(|v| 2.0 * v).collect();
        model.load_flat(&doubled).unwrap();
        assert_eq!(model.flat_params(), doubled);
        assert!(model.load_flat(&[1.0]).is_err());
    }
}
