//! Dynamic tape. Every operation appends a node holding its output value and
//! the information its backward rule needs; nodes are therefore stored in
//! topological order and `backward` is a single reverse sweep.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{NeuralError, Result};
use crate::tensor::Tensor;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    idx: usize,
}

type VjpFn = Box<dyn Fn(&[f64]) -> Vec<f64>>;

enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Offset(usize),
    ScaleBy { x: usize, s: usize },
    Exp(usize),
    Relu(usize),
    LeakyRelu(usize, f64),
    Dense { x: usize, w: usize, b: usize },
    Conv2d { x: usize, w: usize, b: usize },
    Upsample { x: usize, factor: usize },
    ChannelNorm { x: usize, gamma: usize, beta: usize, normalized: Vec<f64>, inv_std: Vec<f64> },
    Reshape(usize),
    Sum(usize),
    SumSquares(usize),
    Dot(usize, usize),
    Custom { x: usize, vjp: VjpFn },
}

struct Node {
    value: Vec<f64>,
    shape: Vec<usize>,
    op: Op,
}

/// Records one forward execution for reverse-mode differentiation.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Vector-Jacobian products for every node reached by a backward sweep.
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to `v`, or `None` if `v` does not influence the output.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.idx).and_then(|g| g.as_deref())
    }
}

fn add_into(dst: &mut Option<Vec<f64>>, src: &[f64]) {
    match dst {
        Some(d) => d.iter_mut().zip(src).for_each(|(a, b)| *a += b),
        None => *dst = Some(src.to_vec()),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(NeuralError::ForeignVar);
        }
        Ok(v.idx)
    }

    fn push(&mut self, value: Vec<f64>, shape: Vec<usize>, op: Op, name: &'static str) -> Result<Var> {
        if value.iter().any(|v| !v.is_finite()) {
            return Err(NeuralError::NonFinite(name));
        }
        self.nodes.push(Node { value, shape, op });
        Ok(Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        })
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.idx].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.idx].shape
    }

    /// Records a leaf holding a copy of `t`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.constant(t.shape.clone(), t.data.clone())
    }

    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Var {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(Node {
            value: data,
            shape,
            op: Op::Leaf,
        });
        Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        }
    }

    fn same_shape(&self, a: usize, b: usize, op: &'static str) -> Result<()> {
        if self.nodes[a].value.len() != self.nodes[b].value.len() {
            return Err(NeuralError::ShapeMismatch {
                op,
                expected: self.nodes[a].shape.clone(),
                got: self.nodes[b].shape.clone(),
            });
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: fn(usize, usize) -> Op) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        self.same_shape(ia, ib, name)?;
        let value = self.nodes[ia]
            .value
            .iter()
            .zip(&self.nodes[ib].value)
            .map(|(x, y)| f(*x, *y))
            .collect();
        let shape = self.nodes[ia].shape.clone();
        self.push(value, shape, op(ia, ib), name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "sub", |x, y| x - y, Op::Sub)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "mul", |x, y| x * y, Op::Mul)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let ix = self.check(x)?;
        let value = self.nodes[ix].value.iter().map(|v| v * c).collect();
        let shape = self.nodes[ix].shape.clone();
        self.push(value, shape, Op::Scale(ix, c), "scale")
    }

    /// `x + c` with a constant vector `c` of the same length.
    pub fn offset(&mut self, x: Var, c: &[f64]) -> Result<Var> {
        let ix = self.check(x)?;
        if c.len() != self.nodes[ix].value.len() {
            return Err(NeuralError::ShapeMismatch {
                op: "offset",
                expected: self.nodes[ix].shape.clone(),
                got: vec![c.len()],
            });
        }
        let value = self.nodes[ix].value.iter().zip(c).map(|(a, b)| a + b).collect();
        let shape = self.nodes[ix].shape.clone();
        self.push(value, shape, Op::Offset(ix), "offset")
    }

    /// `x * s` where `s` is a single-element variable.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        let (ix, is) = (self.check(x)?, self.check(s)?);
        if self.nodes[is].value.len() != 1 {
            return Err(NeuralError::ShapeMismatch {
                op: "scale_by",
                expected: vec![1],
                got: self.nodes[is].shape.clone(),
            });
        }
        let c = self.nodes[is].value[0];
        let value = self.nodes[ix].value.iter().map(|v| v * c).collect();
        let shape = self.nodes[ix].shape.clone();
        self.push(value, shape, Op::ScaleBy { x: ix, s: is }, "scale_by")
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let ix = self.check(x)?;
        let value = self.nodes[ix].value.iter().map(|v| v.exp()).collect();
        let shape = self.nodes[ix].shape.clone();
        self.push(value, shape, Op::Exp(ix), "exp")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let ix = self.check(x)?;
        let value = self.nodes[ix].value.iter().map(|v| v.max(0.0)).collect();
        let shape = self.nodes[ix].shape.clone();
        self.push(value, shape, Op::Relu(ix), "relu")
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        let ix = self.check(x)?;
        let value = self.nodes[ix]
            .value
            .iter()
            .map(|&v| if v > 0.0 { v } else { slope * v })
            .collect();
        let shape = self.nodes[ix].shape.clone();
        self.push(value, shape, Op::LeakyRelu(ix, slope), "leaky_relu")
    }

    /// `W x + b` with `W` of shape `[out, in]`; `x` is flattened.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (ix, iw, ib) = (self.check(x)?, self.check(w)?, self.check(b)?);
        let ws = &self.nodes[iw].shape;
        if ws.len() != 2 || ws[1] != self.nodes[ix].value.len() || self.nodes[ib].value.len() != ws[0] {
            return Err(NeuralError::ShapeMismatch {
                op: "dense",
                expected: ws.clone(),
                got: self.nodes[ix].shape.clone(),
            });
        }
        let (out, inp) = (ws[0], ws[1]);
        let xv = &self.nodes[ix].value;
        let wv = &self.nodes[iw].value;
        let bv = &self.nodes[ib].value;
        let value = (0..out)
            .map(|o| bv[o] + wv[o * inp..(o + 1) * inp].iter().zip(xv).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        self.push(value, vec![out], Op::Dense { x: ix, w: iw, b: ib }, "dense")
    }

    /// Zero-padded "same" convolution. `x: [C, H, W]`, `w: [O, C, k, k]` with odd `k`, `b: [O]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (ix, iw, ib) = (self.check(x)?, self.check(w)?, self.check(b)?);
        let xs = self.nodes[ix].shape.clone();
        let ws = self.nodes[iw].shape.clone();
        if xs.len() != 3 || ws.len() != 4 || ws[1] != xs[0] || ws[2] != ws[3] || ws[2] % 2 == 0 || self.nodes[ib].value.len() != ws[0] {
            return Err(NeuralError::ShapeMismatch {
                op: "conv2d",
                expected: ws,
                got: xs,
            });
        }
        let value = conv2d_forward(&self.nodes[ix].value, &xs, &self.nodes[iw].value, &ws, &self.nodes[ib].value);
        self.push(value, vec![ws[0], xs[1], xs[2]], Op::Conv2d { x: ix, w: iw, b: ib }, "conv2d")
    }

    /// Nearest-neighbour upsampling of `[C, H, W]` by an integer factor.
    pub fn upsample_nearest(&mut self, x: Var, factor: usize) -> Result<Var> {
        let ix = self.check(x)?;
        let xs = self.nodes[ix].shape.clone();
        if xs.len() != 3 || factor == 0 {
            return Err(NeuralError::ShapeMismatch {
                op: "upsample_nearest",
                expected: vec![0, 0, 0],
                got: xs,
            });
        }
        let (c, h, w) = (xs[0], xs[1], xs[2]);
        let (oh, ow) = (h * factor, w * factor);
        let xv = &self.nodes[ix].value;
        let mut value = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    value[(ch * oh + i) * ow + j] = xv[(ch * h + i / factor) * w + j / factor];
                }
            }
        }
        self.push(value, vec![c, oh, ow], Op::Upsample { x: ix, factor }, "upsample_nearest")
    }

    /// Per-channel standardisation of `[C, H, W]` followed by a learnable affine map.
    pub fn channel_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (ix, ig, ibt) = (self.check(x)?, self.check(gamma)?, self.check(beta)?);
        let xs = self.nodes[ix].shape.clone();
        if xs.len() != 3 || self.nodes[ig].value.len() != xs[0] || self.nodes[ibt].value.len() != xs[0] {
            return Err(NeuralError::ShapeMismatch {
                op: "channel_norm",
                expected: vec![xs.first().copied().unwrap_or(0)],
                got: self.nodes[ig].shape.clone(),
            });
        }
        let (c, hw) = (xs[0], xs[1] * xs[2]);
        let xv = &self.nodes[ix].value;
        let g = &self.nodes[ig].value;
        let bt = &self.nodes[ibt].value;
        let mut normalized = vec![0.0; c * hw];
        let mut inv_std = vec![0.0; c];
        let mut value = vec![0.0; c * hw];
        for ch in 0..c {
            let s = &xv[ch * hw..(ch + 1) * hw];
            let mean = s.iter().sum::<f64>() / hw as f64;
            let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / hw as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[ch] = is;
            for k in 0..hw {
                let n = (s[k] - mean) * is;
                normalized[ch * hw + k] = n;
                value[ch * hw + k] = g[ch] * n + bt[ch];
            }
        }
        self.push(
            value,
            xs,
            Op::ChannelNorm {
                x: ix,
                gamma: ig,
                beta: ibt,
                normalized,
                inv_std,
            },
            "channel_norm",
        )
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let ix = self.check(x)?;
        if shape.iter().product::<usize>() != self.nodes[ix].value.len() {
            return Err(NeuralError::ShapeMismatch {
                op: "reshape",
                expected: shape,
                got: self.nodes[ix].shape.clone(),
            });
        }
        let value = self.nodes[ix].value.clone();
        self.push(value, shape, Op::Reshape(ix), "reshape")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let ix = self.check(x)?;
        let s = self.nodes[ix].value.iter().sum();
        self.push(vec![s], vec![1], Op::Sum(ix), "sum")
    }

    /// `‖x‖²` as a scalar.
    pub fn sum_squares(&mut self, x: Var) -> Result<Var> {
        let ix = self.check(x)?;
        let s = self.nodes[ix].value.iter().map(|v| v * v).sum();
        self.push(vec![s], vec![1], Op::SumSquares(ix), "sum_squares")
    }

    /// Inner product `⟨a, b⟩` as a scalar.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        self.same_shape(ia, ib, "dot")?;
        let s = self.nodes[ia].value.iter().zip(&self.nodes[ib].value).map(|(x, y)| x * y).sum();
        self.push(vec![s], vec![1], Op::Dot(ia, ib), "dot")
    }

    /// Records an externally defined map. `value` is the forward output and
    /// `vjp` maps an output cotangent to the input cotangent.
    pub fn custom(&mut self, x: Var, value: Vec<f64>, shape: Vec<usize>, vjp: impl Fn(&[f64]) -> Vec<f64> + 'static) -> Result<Var> {
        let ix = self.check(x)?;
        assert_eq!(shape.iter().product::<usize>(), value.len());
        self.push(value, shape, Op::Custom { x: ix, vjp: Box::new(vjp) }, "custom")
    }

    /// Reverse sweep from `output` seeded with `upstream`.
    pub fn backward(&self, output: Var, upstream: &[f64]) -> Result<Gradients> {
        let out = self.check(output).map_err(|_| NeuralError::NoGraph)?;
        if matches!(self.nodes[out].op, Op::Leaf) {
            return Err(NeuralError::NoGraph);
        }
        if upstream.len() != self.nodes[out].value.len() {
            return Err(NeuralError::ShapeMismatch {
                op: "backward",
                expected: self.nodes[out].shape.clone(),
                got: vec![upstream.len()],
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; out + 1];
        grads[out] = Some(upstream.to_vec());
        for i in (0..=out).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { tape: self.id, grads })
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                add_into(&mut grads[*a], g);
                add_into(&mut grads[*b], g);
            }
            Op::Sub(a, b) => {
                add_into(&mut grads[*a], g);
                let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                add_into(&mut grads[*b], &neg);
            }
            Op::Mul(a, b) => {
                let va = &self.nodes[*a].value;
                let vb = &self.nodes[*b].value;
                let ga: Vec<f64> = g.iter().zip(vb).map(|(x, y)| x * y).collect();
                let gb: Vec<f64> = g.iter().zip(va).map(|(x, y)| x * y).collect();
                add_into(&mut grads[*a], &ga);
                add_into(&mut grads[*b], &gb);
            }
            Op::Scale(x, c) => {
                let gx: Vec<f64> = g.iter().map(|v| v * c).collect();
                add_into(&mut grads[*x], &gx);
            }
            Op::Offset(x) => add_into(&mut grads[*x], g),
            Op::ScaleBy { x, s } => {
                let c = self.nodes[*s].value[0];
                let gx: Vec<f64> = g.iter().map(|v| v * c).collect();
                let gs: f64 = g.iter().zip(&self.nodes[*x].value).map(|(a, b)| a * b).sum();
                add_into(&mut grads[*x], &gx);
                add_into(&mut grads[*s], &[gs]);
            }
            Op::Exp(x) => {
                let gx: Vec<f64> = g.iter().zip(&node.value).map(|(a, e)| a * e).collect();
                add_into(&mut grads[*x], &gx);
            }
            Op::Relu(x) => {
                let gx: Vec<f64> = g
                    .iter()
                    .zip(&self.nodes[*x].value)
                    .map(|(a, v)| if *v > 0.0 { *a } else { 0.0 })
                    .collect();
                add_into(&mut grads[*x], &gx);
            }
            Op::LeakyRelu(x, slope) => {
                let gx: Vec<f64> = g
                    .iter()
                    .zip(&self.nodes[*x].value)
                    .map(|(a, v)| if *v > 0.0 { *a } else { slope * a })
                    .collect();
                add_into(&mut grads[*x], &gx);
            }
            Op::Dense { x, w, b } => {
                let xv = &self.nodes[*x].value;
                let wv = &self.nodes[*w].value;
                let (out, inp) = (g.len(), xv.len());
                let mut gx = vec![0.0; inp];
                let mut gw = vec![0.0; out * inp];
                for o in 0..out {
                    let row = &wv[o * inp..(o + 1) * inp];
                    for k in 0..inp {
                        gx[k] += row[k] * g[o];
                        gw[o * inp + k] = g[o] * xv[k];
                    }
                }
                add_into(&mut grads[*x], &gx);
                add_into(&mut grads[*w], &gw);
                add_into(&mut grads[*b], g);
            }
            Op::Conv2d { x, w, b } => {
                let xs = &self.nodes[*x].shape;
                let ws = &self.nodes[*w].shape;
                let (gx, gw, gb) = conv2d_backward(&self.nodes[*x].value, xs, &self.nodes[*w].value, ws, g);
                add_into(&mut grads[*x], &gx);
                add_into(&mut grads[*w], &gw);
                add_into(&mut grads[*b], &gb);
            }
            Op::Upsample { x, factor } => {
                let xs = &self.nodes[*x].shape;
                let (c, h, w) = (xs[0], xs[1], xs[2]);
                let (oh, ow) = (h * factor, w * factor);
                let mut gx = vec![0.0; c * h * w];
                for ch in 0..c {
                    for i in 0..oh {
                        for j in 0..ow {
                            gx[(ch * h + i / factor) * w + j / factor] += g[(ch * oh + i) * ow + j];
                        }
                    }
                }
                add_into(&mut grads[*x], &gx);
            }
            Op::ChannelNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            } => {
                let xs = &self.nodes[*x].shape;
                let (c, hw) = (xs[0], xs[1] * xs[2]);
                let gm = &self.nodes[*gamma].value;
                let mut gx = vec![0.0; c * hw];
                let mut gg = vec![0.0; c];
                let mut gbt = vec![0.0; c];
                for ch in 0..c {
                    let gs = &g[ch * hw..(ch + 1) * hw];
                    let ns = &normalized[ch * hw..(ch + 1) * hw];
                    let sum_g: f64 = gs.iter().sum();
                    let sum_gn: f64 = gs.iter().zip(ns).map(|(a, b)| a * b).sum();
                    gg[ch] = sum_gn;
                    gbt[ch] = sum_g;
                    let k = gm[ch] * inv_std[ch] / hw as f64;
                    for t in 0..hw {
                        gx[ch * hw + t] = k * (hw as f64 * gs[t] - sum_g - ns[t] * sum_gn);
                    }
                }
                add_into(&mut grads[*x], &gx);
                add_into(&mut grads[*gamma], &gg);
                add_into(&mut grads[*beta], &gbt);
            }
            Op::Reshape(x) => add_into(&mut grads[*x], g),
            Op::Sum(x) => {
                let n = self.nodes[*x].value.len();
                add_into(&mut grads[*x], &vec![g[0]; n]);
            }
            Op::SumSquares(x) => {
                let gx: Vec<f64> = self.nodes[*x].value.iter().map(|v| 2.0 * v * g[0]).collect();
                add_into(&mut grads[*x], &gx);
            }
            Op::Dot(a, b) => {
                let ga: Vec<f64> = self.nodes[*b].value.iter().map(|v| v * g[0]).collect();
                let gb: Vec<f64> = self.nodes[*a].value.iter().map(|v| v * g[0]).collect();
                add_into(&mut grads[*a], &ga);
                add_into(&mut grads[*b], &gb);
            }
            Op::Custom { x, vjp } => {
                let gx = vjp(g);
                add_into(&mut grads[*x], &gx);
            }
        }
    }
}

fn conv2d_forward(x: &[f64], xs: &[usize], w: &[f64], ws: &[usize], b: &[f64]) -> Vec<f64> {
    let (c, h, wd) = (xs[0], xs[1], xs[2]);
    let (o, k) = (ws[0], ws[2]);
    let r = (k / 2) as isize;
    let mut out = vec![0.0; o * h * wd];
    for oc in 0..o {
        let plane = &mut out[oc * h * wd..(oc + 1) * h * wd];
        plane.iter_mut().for_each(|v| *v = b[oc]);
        for ic in 0..c {
            let xin = &x[ic * h * wd..(ic + 1) * h * wd];
            for di in 0..k {
                for dj in 0..k {
                    let wv = w[((oc * c + ic) * k + di) * k + dj];
                    if wv == 0.0 {
                        continue;
                    }
                    let oi = di as isize - r;
                    let oj = dj as isize - r;
                    for i in 0..h {
                        let si = i as isize + oi;
                        if si < 0 || si >= h as isize {
                            continue;
                        }
                        let src = &xin[si as usize * wd..(si as usize + 1) * wd];
                        let dst = &mut plane[i * wd..(i + 1) * wd];
                        let j0 = (-oj).max(0) as usize;
                        let j1 = (wd as isize - oj).min(wd as isize).max(0) as usize;
                        for j in j0..j1 {
                            dst[j] += wv * src[(j as isize + oj) as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv2d_backward(x: &[f64], xs: &[usize], w: &[f64], ws: &[usize], g: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (c, h, wd) = (xs[0], xs[1], xs[2]);
    let (o, k) = (ws[0], ws[2]);
    let r = (k / 2) as isize;
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; o];
    for oc in 0..o {
        let gplane = &g[oc * h * wd..(oc + 1) * h * wd];
        gb[oc] = gplane.iter().sum();
        for ic in 0..c {
            let xin = &x[ic * h * wd..(ic + 1) * h * wd];
            let gxin = &mut gx[ic * h * wd..(ic + 1) * h * wd];
            for di in 0..k {
                for dj in 0..k {
                    let widx = ((oc * c + ic) * k + di) * k + dj;
                    let wv = w[widx];
                    let oi = di as isize - r;
                    let oj = dj as isize - r;
                    let mut acc = 0.0;
                    for i in 0..h {
                        let si = i as isize + oi;
                        if si < 0 || si >= h as isize {
                            continue;
                        }
                        let srow = si as usize * wd;
                        let j0 = (-oj).max(0) as usize;
                        let j1 = (wd as isize - oj).min(wd as isize).max(0) as usize;
                        for j in j0..j1 {
                            let s = (j as isize + oj) as usize;
                            let gv = gplane[i * wd + j];
                            acc += gv * xin[srow + s];
                            gxin[srow + s] += wv * gv;
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    (gx, gw, gb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![1], vec![3.0]);
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y, &[1.0]).unwrap();
        assert_eq!(g.get(x).unwrap(), &[6.0]);
    }

    #[test]
    fn backward_on_leaf_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![1], vec![3.0]);
        assert!(matches!(tape.backward(x, &[1.0]), Err(NeuralError::NoGraph)));
        let other = Tape::new();
        assert!(matches!(other.backward(x, &[1.0]), Err(NeuralError::NoGraph)));
    }

    #[test]
    fn shared_input_accumulates() {
        // f(x) = x*x + 2x, f'(x) = 2x + 2
        let mut tape = Tape::new();
        let x = tape.constant(vec![1], vec![1.5]);
        let sq = tape.mul(x, x).unwrap();
        let lin = tape.scale(x, 2.0).unwrap();
        let f = tape.add(sq, lin).unwrap();
        let g = tape.backward(f, &[1.0]).unwrap();
        assert!((g.get(x).unwrap()[0] - 5.0).abs() < 1e-15);
    }

    #[test]
    fn impulse_conv_is_identity() {
        let mut tape = Tape::new();
        let data: Vec<f64> = (0..25).map(|v| v as f64 * 0.1).collect();
        let x = tape.constant(vec![1, 5, 5], data.clone());
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let w = tape.constant(vec![1, 1, 3, 3], k);
        let b = tape.constant(vec![1], vec![0.0]);
        let y = tape.conv2d(x, w, b).unwrap();
        assert_eq!(tape.value(y), &data[..]);
    }

    #[test]
    fn non_finite_is_reported() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![1], vec![1000.0]);
        assert!(matches!(tape.exp(x), Err(NeuralError::NonFinite("exp"))));
    }
}
