//! Sequential networks built from [`LayerSpec`]s.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NeuralError, Result};
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

const NORM_EPS: f64 = 1e-5;

/// Architecture description of one layer. This is what the checkpoint
/// manifest records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { inputs: usize, outputs: usize },
    Conv2d { in_channels: usize, out_channels: usize, kernel: usize },
    Relu,
    LeakyRelu { slope: f64 },
    UpsampleNearest { factor: usize },
    ChannelNorm { channels: usize },
    Reshape { shape: Vec<usize> },
    /// `x + body(x)`.
    ResidualAdd { body: Vec<LayerSpec> },
}

/// A layer with its parameters resolved to indices in [`Network::params`].
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense { weight: usize, bias: usize },
    Conv2d { weight: usize, bias: usize },
    Relu,
    LeakyRelu(f64),
    UpsampleNearest(usize),
    ChannelNorm { gamma: usize, beta: usize },
    Reshape(Vec<usize>),
    ResidualAdd(Vec<Layer>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    specs: Vec<LayerSpec>,
    layers: Vec<Layer>,
    params: Vec<Tensor>,
    input_shape: Option<Vec<usize>>,
}

/// Parameters of one network bound as leaves of a particular tape.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

fn shape_after(spec: &LayerSpec, shape: Option<Vec<usize>>) -> Result<Option<Vec<usize>>> {
    let bad = |msg: String| Err(NeuralError::InvalidConfig(msg));
    match spec {
        LayerSpec::Dense { inputs, outputs } => {
            if let Some(s) = &shape {
                if s.iter().product::<usize>() != *inputs {
                    return bad(format!("dense expects {inputs} inputs, got shape {s:?}"));
                }
            }
            Ok(Some(vec![*outputs]))
        }
        LayerSpec::Conv2d { in_channels, out_channels, kernel } => {
            if kernel % 2 == 0 {
                return bad(format!("conv2d kernel must be odd, got {kernel}"));
            }
            match shape {
                Some(s) if s.len() != 3 || s[0] != *in_channels => {
                    bad(format!("conv2d expects [{in_channels}, H, W], got {s:?}"))
                }
                Some(s) => Ok(Some(vec![*out_channels, s[1], s[2]])),
                None => Ok(None),
            }
        }
        LayerSpec::Relu | LayerSpec::LeakyRelu { .. } => Ok(shape),
        LayerSpec::UpsampleNearest { factor } => match shape {
            Some(s) if s.len() != 3 => bad(format!("upsample expects [C, H, W], got {s:?}")),
            Some(s) => Ok(Some(vec![s[0], s[1] * factor, s[2] * factor])),
            None => Ok(None),
        },
        LayerSpec::ChannelNorm { channels } => match shape {
            Some(s) if s.len() != 3 || s[0] != *channels => {
                bad(format!("channel_norm expects [{channels}, H, W], got {s:?}"))
            }
            other => Ok(other),
        },
        LayerSpec::Reshape { shape: target } => {
            if let Some(s) = &shape {
                if s.iter().product::<usize>() != target.iter().product::<usize>() {
                    return bad(format!("cannot reshape {s:?} into {target:?}"));
                }
            }
            Ok(Some(target.clone()))
        }
        LayerSpec::ResidualAdd { body } => {
            let mut inner = shape.clone();
            for l in body {
                inner = shape_after(l, inner)?;
            }
            if let (Some(a), Some(b)) = (&shape, &inner) {
                if a != b {
                    return bad(format!("residual body maps {a:?} to {b:?}"));
                }
            }
            Ok(shape)
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
}

fn instantiate(specs: &[LayerSpec], params: &mut Vec<Tensor>, rng: &mut ChaCha8Rng) -> Vec<Layer> {
    let push = |params: &mut Vec<Tensor>, shape: Vec<usize>, data: Vec<f64>| {
        params.push(Tensor::new(shape, data).with_grad());
        params.len() - 1
    };
    specs
        .iter()
        .map(|spec| match spec {
            LayerSpec::Dense { inputs, outputs } => {
                let bound = 1.0 / (*inputs.max(&1) as f64).sqrt();
                let w = uniform(rng, inputs * outputs, bound);
                let b = uniform(rng, *outputs, bound);
                Layer::Dense {
                    weight: push(params, vec![*outputs, *inputs], w),
                    bias: push(params, vec![*outputs], b),
                }
            }
            LayerSpec::Conv2d { in_channels, out_channels, kernel } => {
                let fan_in = in_channels * kernel * kernel;
                let bound = 1.0 / (fan_in as f64).sqrt();
                let w = uniform(rng, out_channels * fan_in, bound);
                let b = uniform(rng, *out_channels, bound);
                Layer::Conv2d {
                    weight: push(params, vec![*out_channels, *in_channels, *kernel, *kernel], w),
                    bias: push(params, vec![*out_channels], b),
                }
            }
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::LeakyRelu { slope } => Layer::LeakyRelu(*slope),
            LayerSpec::UpsampleNearest { factor } => Layer::UpsampleNearest(*factor),
            LayerSpec::ChannelNorm { channels } => Layer::ChannelNorm {
                gamma: push(params, vec![*channels], vec![1.0; *channels]),
                beta: push(params, vec![*channels], vec![0.0; *channels]),
            },
            LayerSpec::Reshape { shape } => Layer::Reshape(shape.clone()),
            LayerSpec::ResidualAdd { body } => Layer::ResidualAdd(instantiate(body, params, rng)),
        })
        .collect()
}

impl Network {
    /// Builds a network and initialises weights uniformly in `±1/√fan_in`.
    ///
    /// `input_shape = None` skips static shape checking (fully convolutional
    /// networks accept any spatial size).
    pub fn new(input_shape: Option<Vec<usize>>, specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let mut shape = input_shape.clone();
        for s in &specs {
            shape = shape_after(s, shape)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let layers = instantiate(&specs, &mut params, &mut rng);
        Ok(Self {
            specs,
            layers,
            params,
            input_shape,
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> Option<&[usize]> {
        self.input_shape.as_deref()
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mut shape = Some(input.to_vec());
        for s in &self.specs {
            shape = shape_after(s, shape)?;
        }
        Ok(shape.unwrap_or_default())
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Parameters flattened in layer order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.data.iter().copied()).collect()
    }

    pub fn load_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_parameters() {
            return Err(NeuralError::Checkpoint(format!(
                "expected {} parameters, got {}",
                self.num_parameters(),
                values.len()
            )));
        }
        let mut offset = 0;
        for p in &mut self.params {
            let n = p.len();
            p.data.copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Zeroes weights and bias of the last parametrised layer. For a network
    /// whose outermost layer is a residual block this makes it the identity.
    pub fn zero_last_layer(&mut self) {
        fn last_param_layer(layers: &[Layer]) -> Option<(usize, usize)> {
            layers.iter().rev().find_map(|l| match l {
                Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias } => Some((*weight, *bias)),
                Layer::ResidualAdd(body) => last_param_layer(body),
                _ => None,
            })
        }
        if let Some((w, b)) = last_param_layer(&self.layers) {
            self.params[w].data.iter_mut().for_each(|v| *v = 0.0);
            self.params[b].data.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Tensor::zero_grad);
    }

    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self.params.iter().map(|p| tape.leaf(p)).collect(),
        }
    }

    pub fn forward_bound(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        self.forward_with(tape, &bound.vars, x)
    }

    /// Runs the network with parameters supplied as tape variables, in the
    /// order of [`Network::params`]. Lets a caller bind one network's
    /// parameters alongside other leaves.
    pub fn forward_with(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var> {
        if params.len() != self.params.len() {
            return Err(NeuralError::InvalidConfig(format!(
                "expected {} parameter variables, got {}",
                self.params.len(),
                params.len()
            )));
        }
        if let Some(s) = &self.input_shape {
            if tape.shape(x) != s.as_slice() {
                return Err(NeuralError::ShapeMismatch {
                    op: "network input",
                    expected: s.clone(),
                    got: tape.shape(x).to_vec(),
                });
            }
        }
        run_layers(&self.layers, tape, params, x)
    }

    /// Binds parameters and runs the network, recording on `tape`.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<(Var, Bound)> {
        let bound = self.bind(tape);
        let y = self.forward_bound(tape, &bound, x)?;
        Ok((y, bound))
    }

    /// Evaluation without keeping the tape.
    pub fn predict(&self, shape: &[usize], input: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let x = tape.constant(shape.to_vec(), input.to_vec());
        let (y, _) = self.forward(&mut tape, x)?;
        Ok(tape.value(y).to_vec())
    }

    /// Adds the gradients of the bound parameters into each parameter's buffer.
    pub fn accumulate_grads(&mut self, bound: &Bound, grads: &Gradients) {
        for (p, v) in self.params.iter_mut().zip(&bound.vars) {
            if !p.requires_grad {
                continue;
            }
            match grads.get(*v) {
                Some(g) => p.accumulate_grad(g),
                None => p.accumulate_grad(&vec![0.0; p.len()]),
            }
        }
    }
}

fn run_layers(layers: &[Layer], tape: &mut Tape, params: &[Var], mut x: Var) -> Result<Var> {
    for layer in layers {
        x = match layer {
            Layer::Dense { weight, bias } => tape.dense(x, params[*weight], params[*bias])?,
            Layer::Conv2d { weight, bias } => tape.conv2d(x, params[*weight], params[*bias])?,
            Layer::Relu => tape.relu(x)?,
            Layer::LeakyRelu(slope) => tape.leaky_relu(x, *slope)?,
            Layer::UpsampleNearest(f) => tape.upsample_nearest(x, *f)?,
            Layer::ChannelNorm { gamma, beta } => tape.channel_norm(x, params[*gamma], params[*beta], NORM_EPS)?,
            Layer::Reshape(shape) => tape.reshape(x, shape.clone())?,
            Layer::ResidualAdd(body) => {
                let y = run_layers(body, tape, params, x)?;
                tape.add(x, y)?
            }
        };
    }
    Ok(x)
}

/// Residual CNN denoiser `x + body(x)` on single-channel images of any size.
///
/// `depth` counts convolutions (at least 2); hidden layers use `channels` maps
/// and 3×3 kernels.
pub fn build_denoiser(channels: usize, depth: usize, seed: u64) -> Result<Network> {
    if channels == 0 || depth < 2 {
        return Err(NeuralError::InvalidConfig(format!(
            "denoiser needs channels >= 1 and depth >= 2 (got {channels}, {depth})"
        )));
    }
    let mut body = vec![
        LayerSpec::Conv2d { in_channels: 1, out_channels: channels, kernel: 3 },
        LayerSpec::Relu,
    ];
    for _ in 0..depth - 2 {
        body.push(LayerSpec::Conv2d { in_channels: channels, out_channels: channels, kernel: 3 });
        body.push(LayerSpec::Relu);
    }
    body.push(LayerSpec::Conv2d { in_channels: channels, out_channels: 1, kernel: 3 });
    Network::new(None, vec![LayerSpec::ResidualAdd { body }], seed)
}

/// Shape of an upsampling decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    /// Feature maps per stage.
    pub channels: usize,
    /// Number of ×2 upsampling stages.
    pub stages: usize,
    pub height: usize,
    pub width: usize,
    /// Side of the square convolution kernel applied after each upsampling.
    #[serde(default = "default_decoder_kernel")]
    pub kernel: usize,
    /// When set, a dense layer maps a vector of this length to the coarsest
    /// feature grid; otherwise the input is a `[channels, h0, w0]` tensor.
    pub latent_dim: Option<usize>,
}

fn default_decoder_kernel() -> usize {
    3
}

impl DecoderConfig {
    /// Default untrained-prior decoder for an `height × width` image: 8 maps,
    /// 4 stages, 3×3 kernels (2409 parameters, fewer than a 64×64 image has pixels).
    pub fn untrained(height: usize, width: usize) -> Self {
        Self { channels: 8, stages: 4, height, width, kernel: 3, latent_dim: None }
    }

    pub fn coarse_dims(&self) -> (usize, usize) {
        let f = 1usize << self.stages;
        (self.height / f, self.width / f)
    }

    pub fn input_shape(&self) -> Vec<usize> {
        match self.latent_dim {
            Some(d) => vec![d],
            None => {
                let (h0, w0) = self.coarse_dims();
                vec![self.channels, h0, w0]
            }
        }
    }
}

/// Upsampling decoder: per stage nearest ×2 upsample, `kernel × kernel` conv,
/// relu and channel normalisation, then a 1×1 conv to one output channel.
pub fn build_decoder(cfg: &DecoderConfig, seed: u64) -> Result<Network> {
    let f = 1usize << cfg.stages;
    if cfg.kernel % 2 == 0 {
        return Err(NeuralError::InvalidConfig(format!("decoder kernel must be odd, got {}", cfg.kernel)));
    }
    if cfg.channels == 0 || cfg.height == 0 || cfg.width == 0 || cfg.height % f != 0 || cfg.width % f != 0 {
        return Err(NeuralError::InvalidConfig(format!(
            "decoder output {}x{} not divisible by 2^{} or zero channels",
            cfg.height, cfg.width, cfg.stages
        )));
    }
    let (h0, w0) = cfg.coarse_dims();
    let c = cfg.channels;
    let mut specs = Vec::new();
    if let Some(d) = cfg.latent_dim {
        specs.push(LayerSpec::Dense { inputs: d, outputs: c * h0 * w0 });
        specs.push(LayerSpec::Reshape { shape: vec![c, h0, w0] });
    }
    for _ in 0..cfg.stages {
        specs.push(LayerSpec::UpsampleNearest { factor: 2 });
        specs.push(LayerSpec::Conv2d { in_channels: c, out_channels: c, kernel: cfg.kernel });
        specs.push(LayerSpec::Relu);
        specs.push(LayerSpec::ChannelNorm { channels: c });
    }
    specs.push(LayerSpec::Conv2d { in_channels: c, out_channels: 1, kernel: 1 });
    specs.push(LayerSpec::Reshape { shape: vec![1, cfg.height, cfg.width] });
    Network::new(Some(cfg.input_shape()), specs, seed)
}
