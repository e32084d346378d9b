use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::attention::{self, Arch, AttentionCache, AttentionKind, BahdanauGrads};
use super::linalg::{matmul_a_bt_acc, matmul_acc, matmul_at_b_acc, sigmoid, softmax_rows, softmax_rows_backward};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Linear,
    /// Softmax over the last axis.
    Softmax,
}

impl Activation {
    pub(crate) fn apply(self, z: &mut [f64], width: usize) {
        match self {
            Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Sigmoid => z.iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Linear => {}
            Activation::Softmax => softmax_rows(z, width),
        }
    }

    /// Turns `grad` from dL/dy into dL/dz, given the activation output `y`.
    pub(crate) fn backprop(self, y: &[f64], grad: &mut [f64], width: usize) {
        match self {
            Activation::Relu => grad.iter_mut().zip(y).for_each(|(g, &v)| {
                if v <= 0.0 {
                    *g = 0.0
                }
            }),
            Activation::Tanh => grad.iter_mut().zip(y).for_each(|(g, &v)| *g *= 1.0 - v * v),
            Activation::Sigmoid => grad.iter_mut().zip(y).for_each(|(g, &v)| *g *= v * (1.0 - v)),
            Activation::Linear => {}
            Activation::Softmax => softmax_rows_backward(y, grad, width),
        }
    }
}

/// Declarative description of one layer. Every layer maps a per-sample shape to
/// a per-sample shape; any extra leading axes are treated as batch.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    /// Affine map over the last axis.
    Dense {
        units: usize,
        activation: Activation,
    },
    /// Valid 2-d convolution over `(H, W, C)` trailing axes.
    Conv2d {
        filters: usize,
        kernel: usize,
        stride: usize,
        activation: Activation,
    },
    MaxPool {
        size: usize,
        stride: usize,
    },
    /// Merges the trailing `(H, W, C)` axes into one.
    Flatten,
    /// Folds a `(T, F)` sequence into the final hidden state `(units)`.
    Lstm {
        units: usize,
    },
    /// Spatial self-attention with its input merge.
    Attention {
        kind: AttentionKind,
        arch: Arch,
    },
    Activation(Activation),
    /// Averages the leading (frame) axis of each sample.
    FrameMean,
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Lstm { .. } => "lstm",
            LayerSpec::Attention { .. } => "attention",
            LayerSpec::Activation(_) => "activation",
            LayerSpec::FrameMean => "frame_mean",
        }
    }
}

/// A trainable tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    fn new(name: String, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { name, value, grad }
    }
}

/// Variance-1/fan_in uniform initialisation.
fn fan_in_uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let limit = (3.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("init shape")
}

/// `rows × (blocks·n)` matrix whose `n × n` column blocks are orthogonal
/// (Gram-Schmidt on Gaussian draws). Requires `rows == n`.
fn orthogonal_blocks(n: usize, blocks: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let width = n * blocks;
    let mut out = vec![0.0; n * width];
    for b in 0..blocks {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
        while basis.len() < n {
            let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
            for u in &basis {
                let proj: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= proj * b);
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 1e-6 {
                v.iter_mut().for_each(|a| *a /= norm);
                basis.push(v);
            }
        }
        for (c, col) in basis.iter().enumerate() {
            for (r, &val) in col.iter().enumerate() {
                out[r * width + b * n + c] = val;
            }
        }
    }
    Tensor::new(vec![n, width], out).expect("orthogonal shape")
}

#[derive(Debug, Clone)]
pub(crate) enum Layer {
    Dense {
        in_dim: usize,
        units: usize,
        activation: Activation,
        weight: Param,
        bias: Param,
    },
    Conv2d {
        in_hwc: [usize; 3],
        out_hw: [usize; 2],
        filters: usize,
        kernel: usize,
        stride: usize,
        activation: Activation,
        weight: Param,
        bias: Param,
    },
    MaxPool {
        in_hwc: [usize; 3],
        out_hw: [usize; 2],
        size: usize,
        stride: usize,
    },
    Flatten,
    Lstm {
        steps: usize,
        in_dim: usize,
        units: usize,
        kernel: Param,
        recurrent: Param,
        bias: Param,
    },
    Attention {
        tokens: usize,
        channels: usize,
        kind: AttentionKind,
        arch: Arch,
        /// `(w_query, w_key, v)` for the additive form.
        additive: Option<(Param, Param, Param)>,
    },
    Activation {
        activation: Activation,
        width: usize,
    },
    FrameMean {
        frames: usize,
    },
}

#[derive(Debug, Clone)]
pub(crate) enum Cache {
    /// Inputs and post-activation outputs.
    InOut(Tensor, Tensor),
    Output(Tensor),
    Argmax(Vec<usize>),
    None,
    Lstm(LstmCache),
    Attention(Tensor, AttentionCache),
}

#[derive(Debug, Clone)]
pub(crate) struct LstmCache {
    /// Per step: `(rows, 4U)` gate activations in i, f, g, o order.
    gates: Vec<Vec<f64>>,
    /// Per step cell and hidden states, index 0 is the zero initial state.
    cells: Vec<Vec<f64>>,
    hidden: Vec<Vec<f64>>,
    /// Per step inputs `(rows, F)`.
    inputs: Vec<Vec<f64>>,
}

fn trailing_hwc(shape: &[usize]) -> Option<[usize; 3]> {
    let n = shape.len();
    (n >= 3).then(|| [shape[n - 3], shape[n - 2], shape[n - 1]])
}

impl Layer {
    /// Instantiates `spec` for per-sample input shape `input`, returning the
    /// layer and its per-sample output shape.
    pub(crate) fn build(
        spec: &LayerSpec,
        input: &[usize],
        index: usize,
        rng: &mut ChaCha8Rng,
    ) -> std::result::Result<(Layer, Vec<usize>), String> {
        let prefix = format!("{index}.{}", spec.kind_name());
        match *spec {
            LayerSpec::Dense { units, activation } => {
                let in_dim = *input.last().ok_or("dense needs a non-scalar input")?;
                if units == 0 {
                    return Err("dense units must be positive".into());
                }
                let weight = Param::new(
                    format!("{prefix}.weight"),
                    fan_in_uniform(&[in_dim, units], in_dim, rng),
                );
                let bias = Param::new(format!("{prefix}.bias"), Tensor::zeros(&[units]));
                let mut out = input.to_vec();
                *out.last_mut().unwrap() = units;
                Ok((
                    Layer::Dense {
                        in_dim,
                        units,
                        activation,
                        weight,
                        bias,
                    },
                    out,
                ))
            }
            LayerSpec::Conv2d {
                filters,
                kernel,
                stride,
                activation,
            } => {
                let [h, w, c] = trailing_hwc(input).ok_or("conv2d needs (H, W, C) input")?;
                if kernel == 0 || stride == 0 || filters == 0 {
                    return Err("conv2d sizes must be positive".into());
                }
                if h < kernel || w < kernel {
                    return Err(format!("kernel {kernel} larger than input {h}x{w}"));
                }
                let out_hw = [(h - kernel) / stride + 1, (w - kernel) / stride + 1];
                let fan_in = kernel * kernel * c;
                let weight = Param::new(
                    format!("{prefix}.kernel"),
                    fan_in_uniform(&[kernel, kernel, c, filters], fan_in, rng),
                );
                let bias = Param::new(format!("{prefix}.bias"), Tensor::zeros(&[filters]));
                let mut out = input[..input.len() - 3].to_vec();
                out.extend_from_slice(&[out_hw[0], out_hw[1], filters]);
                Ok((
                    Layer::Conv2d {
                        in_hwc: [h, w, c],
                        out_hw,
                        filters,
                        kernel,
                        stride,
                        activation,
                        weight,
                        bias,
                    },
                    out,
                ))
            }
            LayerSpec::MaxPool { size, stride } => {
                let [h, w, c] = trailing_hwc(input).ok_or("maxpool needs (H, W, C) input")?;
                if size == 0 || stride == 0 || h < size || w < size {
                    return Err(format!("pool {size}/{stride} does not fit {h}x{w}"));
                }
                let out_hw = [(h - size) / stride + 1, (w - size) / stride + 1];
                let mut out = input[..input.len() - 3].to_vec();
                out.extend_from_slice(&[out_hw[0], out_hw[1], c]);
                Ok((
                    Layer::MaxPool {
                        in_hwc: [h, w, c],
                        out_hw,
                        size,
                        stride,
                    },
                    out,
                ))
            }
            LayerSpec::Flatten => {
                let [h, w, c] = trailing_hwc(input).ok_or("flatten needs (H, W, C) input")?;
                let mut out = input[..input.len() - 3].to_vec();
                out.push(h * w * c);
                Ok((Layer::Flatten, out))
            }
            LayerSpec::Lstm { units } => {
                if input.len() != 2 {
                    return Err(format!("lstm needs a (T, F) input, got {input:?}"));
                }
                if units == 0 {
                    return Err("lstm units must be positive".into());
                }
                let (steps, in_dim) = (input[0], input[1]);
                let kernel = Param::new(
                    format!("{prefix}.kernel"),
                    fan_in_uniform(&[in_dim, 4 * units], in_dim, rng),
                );
                let recurrent = Param::new(format!("{prefix}.recurrent"), orthogonal_blocks(units, 4, rng));
                let mut b = vec![0.0; 4 * units];
                b[units..2 * units].iter_mut().for_each(|v| *v = 1.0);
                let bias = Param::new(format!("{prefix}.bias"), Tensor::vector(b));
                Ok((
                    Layer::Lstm {
                        steps,
                        in_dim,
                        units,
                        kernel,
                        recurrent,
                        bias,
                    },
                    vec![units],
                ))
            }
            LayerSpec::Attention { kind, arch } => {
                let [h, w, c] = trailing_hwc(input).ok_or("attention needs (H, W, C) input")?;
                let additive = match kind {
                    AttentionKind::Luong => None,
                    AttentionKind::Bahdanau => Some((
                        Param::new(format!("{prefix}.w_query"), fan_in_uniform(&[c, c], c, rng)),
                        Param::new(format!("{prefix}.w_key"), fan_in_uniform(&[c, c], c, rng)),
                        Param::new(format!("{prefix}.v"), fan_in_uniform(&[c], c, rng)),
                    )),
                };
                Ok((
                    Layer::Attention {
                        tokens: h * w,
                        channels: c,
                        kind,
                        arch,
                        additive,
                    },
                    input.to_vec(),
                ))
            }
            LayerSpec::Activation(activation) => {
                let width = *input.last().ok_or("activation needs a non-scalar input")?;
                Ok((Layer::Activation { activation, width }, input.to_vec()))
            }
            LayerSpec::FrameMean => {
                if input.len() < 2 {
                    return Err(format!("frame mean needs a framed input, got {input:?}"));
                }
                Ok((Layer::FrameMean { frames: input[0] }, input[1..].to_vec()))
            }
        }
    }

    pub(crate) fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Dense { weight, bias, .. } | Layer::Conv2d { weight, bias, .. } => {
                vec![weight, bias]
            }
            Layer::Lstm {
                kernel,
                recurrent,
                bias,
                ..
            } => vec![kernel, recurrent, bias],
            Layer::Attention {
                additive: Some((a, b, c)),
                ..
            } => vec![a, b, c],
            _ => vec![],
        }
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Dense { weight, bias, .. } | Layer::Conv2d { weight, bias, .. } => {
                vec![weight, bias]
            }
            Layer::Lstm {
                kernel,
                recurrent,
                bias,
                ..
            } => vec![kernel, recurrent, bias],
            Layer::Attention {
                additive: Some((a, b, c)),
                ..
            } => vec![a, b, c],
            _ => vec![],
        }
    }

    pub(crate) fn is_conv(&self) -> bool {
        matches!(self, Layer::Conv2d { .. })
    }

    /// `x` has batch-leading shape; `out_shape` is the matching output shape.
    pub(crate) fn forward(&self, x: &Tensor, out_shape: Vec<usize>, keep: bool) -> (Tensor, Cache) {
        let xd = x.data();
        match self {
            Layer::Dense {
                in_dim,
                units,
                activation,
                weight,
                bias,
            } => {
                let rows = xd.len() / in_dim;
                let mut z = Vec::with_capacity(rows * units);
                for _ in 0..rows {
                    z.extend_from_slice(bias.value.data());
                }
                matmul_acc(xd, weight.value.data(), rows, *in_dim, *units, &mut z);
                activation.apply(&mut z, *units);
                let y = Tensor::new(out_shape, z).expect("dense output");
                let cache = if keep {
                    Cache::InOut(x.clone(), y.clone())
                } else {
                    Cache::None
                };
                (y, cache)
            }
            Layer::Conv2d {
                in_hwc,
                out_hw,
                filters,
                kernel,
                stride,
                activation,
                weight,
                bias,
            } => {
                let [h, w, c] = *in_hwc;
                let [oh, ow] = *out_hw;
                let f = *filters;
                let images = xd.len() / (h * w * c);
                let kd = weight.value.data();
                let bd = bias.value.data();
                let mut out = vec![0.0; images * oh * ow * f];
                for img in 0..images {
                    let xi = &xd[img * h * w * c..(img + 1) * h * w * c];
                    let oi = &mut out[img * oh * ow * f..(img + 1) * oh * ow * f];
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let o = &mut oi[(oy * ow + ox) * f..(oy * ow + ox + 1) * f];
                            o.copy_from_slice(bd);
                            for ky in 0..*kernel {
                                let iy = oy * stride + ky;
                                for kx in 0..*kernel {
                                    let ix = ox * stride + kx;
                                    let px = &xi[(iy * w + ix) * c..(iy * w + ix + 1) * c];
                                    let wbase = (ky * kernel + kx) * c * f;
                                    for (ci, &xv) in px.iter().enumerate() {
                                        if xv == 0.0 {
                                            continue;
                                        }
                                        let wr = &kd[wbase + ci * f..wbase + (ci + 1) * f];
                                        for (ov, &wv) in o.iter_mut().zip(wr) {
                                            *ov += xv * wv;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                activation.apply(&mut out, f);
                let y = Tensor::new(out_shape, out).expect("conv output");
                let cache = if keep {
                    Cache::InOut(x.clone(), y.clone())
                } else {
                    Cache::None
                };
                (y, cache)
            }
            Layer::MaxPool {
                in_hwc,
                out_hw,
                size,
                stride,
            } => {
                let [h, w, c] = *in_hwc;
                let [oh, ow] = *out_hw;
                let images = xd.len() / (h * w * c);
                let mut out = vec![0.0; images * oh * ow * c];
                let mut argmax = vec![0usize; out.len()];
                for img in 0..images {
                    let base = img * h * w * c;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            for ch in 0..c {
                                let mut best = f64::NEG_INFINITY;
                                let mut best_i = 0;
                                for ky in 0..*size {
                                    for kx in 0..*size {
                                        let idx = base + ((oy * stride + ky) * w + ox * stride + kx) * c + ch;
                                        if xd[idx] > best {
                                            best = xd[idx];
                                            best_i = idx;
                                        }
                                    }
                                }
                                let o = ((img * oh + oy) * ow + ox) * c + ch;
                                out[o] = best;
                                argmax[o] = best_i;
                            }
                        }
                    }
                }
                let y = Tensor::new(out_shape, out).expect("pool output");
                (y, if keep { Cache::Argmax(argmax) } else { Cache::None })
            }
            Layer::Flatten => (x.clone().reshape(out_shape).expect("flatten output"), Cache::None),
            Layer::FrameMean { frames } => {
                let samples = x.shape()[0];
                let width = xd.len() / (samples * frames);
                let mut out = vec![0.0; samples * width];
                for s in 0..samples {
                    let o = &mut out[s * width..(s + 1) * width];
                    for t in 0..*frames {
                        let xr = &xd[(s * frames + t) * width..(s * frames + t + 1) * width];
                        o.iter_mut().zip(xr).for_each(|(a, b)| *a += b);
                    }
                    let inv = 1.0 / *frames as f64;
                    o.iter_mut().for_each(|a| *a *= inv);
                }
                (Tensor::new(out_shape, out).expect("frame mean output"), Cache::None)
            }
            Layer::Activation { activation, width } => {
                let mut y = x.clone().reshape(out_shape).expect("activation output");
                activation.apply(y.data_mut(), *width);
                let cache = if keep { Cache::Output(y.clone()) } else { Cache::None };
                (y, cache)
            }
            Layer::Lstm {
                steps,
                in_dim,
                units,
                kernel,
                recurrent,
                bias,
            } => {
                let (t_len, f, u) = (*steps, *in_dim, *units);
                let rows = xd.len() / (t_len * f);
                let mut c_prev = vec![0.0; rows * u];
                let mut h_prev = vec![0.0; rows * u];
                let mut cache = LstmCache {
                    gates: Vec::with_capacity(t_len),
                    cells: vec![c_prev.clone()],
                    hidden: vec![h_prev.clone()],
                    inputs: Vec::with_capacity(t_len),
                };
                for t in 0..t_len {
                    let mut xt = Vec::with_capacity(rows * f);
                    for r in 0..rows {
                        xt.extend_from_slice(&xd[(r * t_len + t) * f..(r * t_len + t + 1) * f]);
                    }
                    let mut z = Vec::with_capacity(rows * 4 * u);
                    for _ in 0..rows {
                        z.extend_from_slice(bias.value.data());
                    }
                    matmul_acc(&xt, kernel.value.data(), rows, f, 4 * u, &mut z);
                    matmul_acc(&h_prev, recurrent.value.data(), rows, u, 4 * u, &mut z);
                    let mut c = vec![0.0; rows * u];
                    let mut h = vec![0.0; rows * u];
                    for r in 0..rows {
                        let zr = &mut z[r * 4 * u..(r + 1) * 4 * u];
                        for j in 0..u {
                            zr[j] = sigmoid(zr[j]);
                            zr[u + j] = sigmoid(zr[u + j]);
                            zr[2 * u + j] = zr[2 * u + j].tanh();
                            zr[3 * u + j] = sigmoid(zr[3 * u + j]);
                            let cv = zr[u + j] * c_prev[r * u + j] + zr[j] * zr[2 * u + j];
                            c[r * u + j] = cv;
                            h[r * u + j] = zr[3 * u + j] * cv.tanh();
                        }
                    }
                    if keep {
                        cache.gates.push(z);
                        cache.cells.push(c.clone());
                        cache.hidden.push(h.clone());
                        cache.inputs.push(xt);
                    }
                    c_prev = c;
                    h_prev = h;
                }
                let y = Tensor::new(out_shape, h_prev).expect("lstm output");
                (y, if keep { Cache::Lstm(cache) } else { Cache::None })
            }
            Layer::Attention {
                tokens,
                channels,
                kind,
                arch,
                additive,
            } => {
                let images = xd.len() / (tokens * channels);
                let mut out = vec![0.0; xd.len()];
                let params = additive
                    .as_ref()
                    .map(|(a, b, c)| (a.value.data(), b.value.data(), c.value.data()));
                let ac = attention::forward_maps(xd, images, *tokens, *channels, *kind, *arch, params, &mut out);
                let y = Tensor::new(out_shape, out).expect("attention output");
                let cache = if keep {
                    Cache::Attention(x.clone(), ac)
                } else {
                    Cache::None
                };
                (y, cache)
            }
        }
    }

    /// Accumulates parameter gradients and returns dL/dinput.
    pub(crate) fn backward(&mut self, cache: &Cache, gy: &Tensor, in_shape: &[usize]) -> Result<Tensor> {
        let missing = || Error::Usage("backward called without a cached train-mode forward".into());
        let gyd = gy.data();
        match self {
            Layer::Dense {
                in_dim,
                units,
                activation,
                weight,
                bias,
            } => {
                let Cache::InOut(x, y) = cache else {
                    return Err(missing());
                };
                let rows = x.len() / *in_dim;
                let mut gz = gyd.to_vec();
                activation.backprop(y.data(), &mut gz, *units);
                matmul_at_b_acc(x.data(), &gz, rows, *in_dim, *units, weight.grad.data_mut());
                let gb = bias.grad.data_mut();
                for r in gz.chunks(*units) {
                    gb.iter_mut().zip(r).for_each(|(a, b)| *a += b);
                }
                let mut gx = vec![0.0; x.len()];
                matmul_a_bt_acc(&gz, weight.value.data(), rows, *units, *in_dim, &mut gx);
                Tensor::new(in_shape.to_vec(), gx)
            }
            Layer::Conv2d {
                in_hwc,
                out_hw,
                filters,
                kernel,
                stride,
                activation,
                weight,
                bias,
            } => {
                let Cache::InOut(x, y) = cache else {
                    return Err(missing());
                };
                let [h, w, c] = *in_hwc;
                let [oh, ow] = *out_hw;
                let f = *filters;
                let xd = x.data();
                let images = xd.len() / (h * w * c);
                let mut gz = gyd.to_vec();
                activation.backprop(y.data(), &mut gz, f);
                let gb = bias.grad.data_mut();
                for r in gz.chunks(f) {
                    gb.iter_mut().zip(r).for_each(|(a, b)| *a += b);
                }
                let kd = weight.value.data();
                let gk = weight.grad.data_mut();
                let mut gx = vec![0.0; xd.len()];
                for img in 0..images {
                    let xi = &xd[img * h * w * c..(img + 1) * h * w * c];
                    let gxi = &mut gx[img * h * w * c..(img + 1) * h * w * c];
                    let gzi = &gz[img * oh * ow * f..(img + 1) * oh * ow * f];
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let g = &gzi[(oy * ow + ox) * f..(oy * ow + ox + 1) * f];
                            if g.iter().all(|&v| v == 0.0) {
                                continue;
                            }
                            for ky in 0..*kernel {
                                let iy = oy * *stride + ky;
                                for kx in 0..*kernel {
                                    let ix = ox * *stride + kx;
                                    let pbase = (iy * w + ix) * c;
                                    let wbase = (ky * *kernel + kx) * c * f;
                                    for ci in 0..c {
                                        let wr = &kd[wbase + ci * f..wbase + (ci + 1) * f];
                                        let mut acc = 0.0;
                                        for (a, b) in g.iter().zip(wr) {
                                            acc += a * b;
                                        }
                                        gxi[pbase + ci] += acc;
                                        let xv = xi[pbase + ci];
                                        if xv != 0.0 {
                                            let gr = &mut gk[wbase + ci * f..wbase + (ci + 1) * f];
                                            for (a, b) in gr.iter_mut().zip(g) {
                                                *a += xv * b;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                Tensor::new(in_shape.to_vec(), gx)
            }
            Layer::MaxPool { .. } => {
                let Cache::Argmax(argmax) = cache else {
                    return Err(missing());
                };
                let n: usize = in_shape.iter().product();
                let mut gx = vec![0.0; n];
                for (o, &i) in argmax.iter().enumerate() {
                    gx[i] += gyd[o];
                }
                Tensor::new(in_shape.to_vec(), gx)
            }
            Layer::Flatten => gy.clone().reshape(in_shape.to_vec()),
            Layer::FrameMean { frames } => {
                let samples = in_shape[0];
                let width = gyd.len() / samples;
                let inv = 1.0 / *frames as f64;
                let mut gx = Vec::with_capacity(samples * *frames * width);
                for s in 0..samples {
                    for _ in 0..*frames {
                        gx.extend(gyd[s * width..(s + 1) * width].iter().map(|g| g * inv));
                    }
                }
                Tensor::new(in_shape.to_vec(), gx)
            }
            Layer::Activation { activation, width } => {
                let Cache::Output(y) = cache else {
                    return Err(missing());
                };
                let mut g = gyd.to_vec();
                activation.backprop(y.data(), &mut g, *width);
                Tensor::new(in_shape.to_vec(), g)
            }
            Layer::Lstm {
                steps,
                in_dim,
                units,
                kernel,
                recurrent,
                bias,
            } => {
                let Cache::Lstm(lc) = cache else {
                    return Err(missing());
                };
                let (t_len, f, u) = (*steps, *in_dim, *units);
                let rows = gyd.len() / u;
                let mut dh = gyd.to_vec();
                let mut dc = vec![0.0; rows * u];
                let mut gx = vec![0.0; rows * t_len * f];
                for t in (0..t_len).rev() {
                    let gates = &lc.gates[t];
                    let c_prev = &lc.cells[t];
                    let c_now = &lc.cells[t + 1];
                    let mut dz = vec![0.0; rows * 4 * u];
                    for r in 0..rows {
                        for j in 0..u {
                            let k = r * u + j;
                            let gi = gates[r * 4 * u + j];
                            let gf = gates[r * 4 * u + u + j];
                            let gg = gates[r * 4 * u + 2 * u + j];
                            let go = gates[r * 4 * u + 3 * u + j];
                            let tc = c_now[k].tanh();
                            let d_o = dh[k] * tc;
                            dc[k] += dh[k] * go * (1.0 - tc * tc);
                            let d_i = dc[k] * gg;
                            let d_g = dc[k] * gi;
                            let d_f = dc[k] * c_prev[k];
                            dc[k] *= gf;
                            let zr = &mut dz[r * 4 * u..(r + 1) * 4 * u];
                            zr[j] = d_i * gi * (1.0 - gi);
                            zr[u + j] = d_f * gf * (1.0 - gf);
                            zr[2 * u + j] = d_g * (1.0 - gg * gg);
                            zr[3 * u + j] = d_o * go * (1.0 - go);
                        }
                    }
                    matmul_at_b_acc(&lc.inputs[t], &dz, rows, f, 4 * u, kernel.grad.data_mut());
                    matmul_at_b_acc(&lc.hidden[t], &dz, rows, u, 4 * u, recurrent.grad.data_mut());
                    let gb = bias.grad.data_mut();
                    for zr in dz.chunks(4 * u) {
                        gb.iter_mut().zip(zr).for_each(|(a, b)| *a += b);
                    }
                    let mut dxt = vec![0.0; rows * f];
                    matmul_a_bt_acc(&dz, kernel.value.data(), rows, 4 * u, f, &mut dxt);
                    for r in 0..rows {
                        gx[(r * t_len + t) * f..(r * t_len + t + 1) * f].copy_from_slice(&dxt[r * f..(r + 1) * f]);
                    }
                    let mut dh_prev = vec![0.0; rows * u];
                    matmul_a_bt_acc(&dz, recurrent.value.data(), rows, 4 * u, u, &mut dh_prev);
                    dh = dh_prev;
                }
                Tensor::new(in_shape.to_vec(), gx)
            }
            Layer::Attention {
                tokens,
                channels,
                kind,
                arch,
                additive,
            } => {
                let Cache::Attention(x, ac) = cache else {
                    return Err(missing());
                };
                let xd = x.data();
                let images = xd.len() / (*tokens * *channels);
                let mut gx = vec![0.0; xd.len()];
                let grads = additive.as_mut().map(|(wq, wk, v)| BahdanauGrads {
                    w_query: wq.value.data(),
                    w_key: wk.value.data(),
                    v: v.value.data(),
                    g_query: wq.grad.data_mut(),
                    g_key: wk.grad.data_mut(),
                    g_v: v.grad.data_mut(),
                });
                attention::backward_maps(xd, ac, gyd, images, *tokens, *channels, *kind, *arch, grads, &mut gx);
                Tensor::new(in_shape.to_vec(), gx)
            }
        }
    }
}
