//! Shared convolutional feature network with optional spatial attention,
//! frame stacking and an optional LSTM over frames.
//!
//! Layout for a `(T, H, W, C)` stack: per conv stage a 3×3 stride-2 ReLU conv
//! (the first stage followed by a 2×2 max-pool), then an attention layer when
//! enabled; then flatten, `Dense(feature_dim, tanh)` per frame, and finally an
//! LSTM over the frames or the mean over frames.

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::netlib::{Activation, Arch, AttentionKind, LayerSpec, Mode, NetworkGraph, Tensor};

pub const CONV_KERNEL: usize = 3;
pub const CONV_STRIDE: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNetSpec {
    /// `None` disables attention.
    pub attention: Option<AttentionKind>,
    /// Combine architecture index, 0..=3.
    pub arch: u32,
    pub use_lstm: bool,
    pub stack_size: usize,
    pub conv_channels: Vec<usize>,
    pub feature_dim: usize,
}

impl Default for FeatureNetSpec {
    fn default() -> Self {
        Self {
            attention: None,
            arch: 0,
            use_lstm: false,
            stack_size: 1,
            conv_channels: vec![8, 16],
            feature_dim: 32,
        }
    }
}

impl FeatureNetSpec {
    pub fn validate(&self) -> Result<()> {
        Arch::from_index(self.arch)?;
        if self.stack_size == 0 {
            return Err(Error::InvalidArgument("stack_size must be at least 1".into()));
        }
        if self.use_lstm && self.stack_size < 2 {
            return Err(Error::InvalidArgument(
                "an LSTM feature net needs stack_size >= 2".into(),
            ));
        }
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return Err(Error::InvalidArgument(
                "conv_channels must be non-empty and positive".into(),
            ));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidArgument("feature_dim must be positive".into()));
        }
        Ok(())
    }

    pub fn layers(&self) -> Result<Vec<LayerSpec>> {
        self.validate()?;
        let arch = Arch::from_index(self.arch)?;
        let mut layers = Vec::new();
        for (stage, &filters) in self.conv_channels.iter().enumerate() {
            layers.push(LayerSpec::Conv2d {
                filters,
                kernel: CONV_KERNEL,
                stride: CONV_STRIDE,
                activation: Activation::Relu,
            });
            if stage == 0 {
                layers.push(LayerSpec::MaxPool { size: 2, stride: 2 });
            }
            if let Some(kind) = self.attention {
                layers.push(LayerSpec::Attention { kind, arch });
            }
        }
        layers.push(LayerSpec::Flatten);
        layers.push(LayerSpec::Dense {
            units: self.feature_dim,
            activation: Activation::Tanh,
        });
        layers.push(if self.use_lstm {
            LayerSpec::Lstm {
                units: self.feature_dim,
            }
        } else {
            LayerSpec::FrameMean
        });
        Ok(layers)
    }
}

/// Builds the feature network for per-frame input shape `frame_shape`
/// `(H, W, C)`. The graph input is `(stack_size, H, W, C)`.
pub fn make_feature_net(spec: &FeatureNetSpec, frame_shape: [usize; 3], seed: u64) -> Result<NetworkGraph> {
    let layers = spec.layers()?;
    let input = [spec.stack_size, frame_shape[0], frame_shape[1], frame_shape[2]];
    NetworkGraph::build(&layers, &input, seed)
}

/// Per-frame input shape of a goal-conditioned net: observation and goal
/// stacked channel-wise.
pub fn goal_conditioned(obs_shape: [usize; 3]) -> [usize; 3] {
    [obs_shape[0], obs_shape[1], 2 * obs_shape[2]]
}

/// The last `size` frames, oldest first. Frames are shared, so consecutive
/// stacks cost one image each.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationStack {
    frames: Vec<Arc<Image>>,
}

impl ObservationStack {
    /// Episode start: the first frame fills every slot.
    pub fn new(first: Arc<Image>, size: usize) -> Self {
        Self {
            frames: vec![first; size.max(1)],
        }
    }

    pub fn from_frames(frames: Vec<Arc<Image>>) -> Result<Self> {
        let first = frames.first().ok_or_else(|| Error::shape("empty observation stack"))?;
        if frames.iter().any(|f| f.shape() != first.shape()) {
            return Err(Error::shape("observation frames differ in shape"));
        }
        Ok(Self { frames })
    }

    /// Successor stack after observing `frame`.
    pub fn pushed(&self, frame: Arc<Image>) -> Self {
        let mut frames = self.frames[1..].to_vec();
        frames.push(frame);
        Self { frames }
    }

    pub fn frames(&self) -> &[Arc<Image>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn newest(&self) -> &Arc<Image> {
        self.frames.last().expect("stack is never empty")
    }

    pub fn frame_shape(&self) -> [usize; 3] {
        self.frames[0].shape()
    }

    /// `(T, H, W, C)` tensor of the frames.
    pub fn to_tensor(&self) -> Tensor {
        let mut data = Vec::new();
        self.write_values(None, false, &mut data);
        let [h, w, c] = self.frame_shape();
        Tensor::new(vec![self.len(), h, w, c], data).expect("consistent frames")
    }

    /// `(T, H, W, 2C)` tensor with `goal` (or zeros) beside every frame.
    pub fn to_goal_tensor(&self, goal: Option<&Image>) -> Result<Tensor> {
        if let Some(g) = goal {
            if g.shape() != self.frame_shape() {
                return Err(Error::shape(format!(
                    "goal {:?} does not match frames {:?}",
                    g.shape(),
                    self.frame_shape()
                )));
            }
        }
        let mut data = Vec::new();
        self.write_values(goal, true, &mut data);
        let [h, w, c] = self.frame_shape();
        Tensor::new(vec![self.len(), h, w, 2 * c], data)
    }

    /// Appends the stack's values to `out`, interleaving goal channels when
    /// `with_goal` is set. Used to assemble batches without intermediate copies.
    pub fn write_values(&self, goal: Option<&Image>, with_goal: bool, out: &mut Vec<f64>) {
        let c = self.frame_shape()[2];
        for f in &self.frames {
            let raw = f.raw();
            if !with_goal {
                out.extend(raw.iter().map(|&k| k as f64 / 255.0));
                continue;
            }
            for (p, px) in raw.chunks(c).enumerate() {
                out.extend(px.iter().map(|&k| k as f64 / 255.0));
                match goal {
                    Some(g) => out.extend(g.raw()[p * c..(p + 1) * c].iter().map(|&k| k as f64 / 255.0)),
                    None => out.extend(std::iter::repeat_n(0.0, c)),
                }
            }
        }
    }
}

fn check_input(net: &NetworkGraph, input: &Tensor) -> Result<()> {
    if input.shape() != net.input_shape() {
        return Err(Error::shape(format!(
            "feature net expects a {:?} stack, got {:?}",
            net.input_shape(),
            input.shape()
        )));
    }
    Ok(())
}

/// Feature vector of one unbatched stack tensor `(T, H, W, C)`, eval mode.
pub fn extract(net: &NetworkGraph, input: &Tensor) -> Result<Tensor> {
    check_input(net, input)?;
    let mut shape = vec![1];
    shape.extend_from_slice(input.shape());
    let out = net.infer(&input.clone().reshape(shape)?)?;
    out.reshape(vec![net.output_shape()[0]])
}

/// Feature vector for a plain observation stack.
pub fn extract_stack(net: &NetworkGraph, obs: &ObservationStack) -> Result<Tensor> {
    extract(net, &obs.to_tensor())
}

/// Gradient-times-activation saliency at the last conv layer for feature
/// `feature_index`, one `(H, W)` map per frame with values in `[0, 1]`.
pub fn saliency_map(net: &NetworkGraph, input: &Tensor, feature_index: usize) -> Result<Vec<Tensor>> {
    check_input(net, input)?;
    let features = net.output_shape()[0];
    if feature_index >= features {
        return Err(Error::InvalidArgument(format!(
            "feature index {feature_index} out of range for {features} features"
        )));
    }
    let conv = net
        .last_conv_layer()
        .ok_or_else(|| Error::InvalidArgument("saliency needs a conv layer".into()))?;
    let tap = conv + 1;
    let mut work = net.clone();
    let mut shape = vec![1];
    shape.extend_from_slice(input.shape());
    let batched = input.clone().reshape(shape)?;
    let (_, act) = work.infer_with_tap(&batched, tap)?;
    work.forward(&batched, Mode::Train)?;
    let mut seed = Tensor::zeros(&[1, features]);
    seed.data_mut()[feature_index] = 1.0;
    let (_, grad) = work.backward_tapped(&seed, Some(tap))?;
    let grad = grad.expect("tap inside graph");

    let a_shape = act.shape();
    let (frames, h, w, c) = (a_shape[1], a_shape[2], a_shape[3], a_shape[4]);
    let (out_h, out_w) = (input.shape()[1], input.shape()[2]);
    let mut maps = Vec::with_capacity(frames);
    for f in 0..frames {
        let base = f * h * w * c;
        let raw: Vec<f64> = (0..h * w)
            .map(|p| {
                let o = base + p * c;
                let s: f64 = (0..c).map(|k| grad.data()[o + k] * act.data()[o + k]).sum();
                s.max(0.0)
            })
            .collect();
        let mut up = bilinear(&raw, h, w, out_h, out_w);
        normalize(&mut up);
        maps.push(Tensor::new(vec![out_h, out_w], up)?);
    }
    Ok(maps)
}

/// Resizes with half-pixel centre alignment and edge clamping.
fn bilinear(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let coord = |i: usize, from: usize, to: usize| -> (usize, usize, f64) {
        let x = ((i as f64 + 0.5) * from as f64 / to as f64 - 0.5).clamp(0.0, (from - 1) as f64);
        let lo = x.floor() as usize;
        let hi = (lo + 1).min(from - 1);
        (lo, hi, x - lo as f64)
    };
    let mut out = Vec::with_capacity(out_h * out_w);
    for r in 0..out_h {
        let (r0, r1, fr) = coord(r, h, out_h);
        for col in 0..out_w {
            let (c0, c1, fc) = coord(col, w, out_w);
            let top = src[r0 * w + c0] * (1.0 - fc) + src[r0 * w + c1] * fc;
            let bottom = src[r1 * w + c0] * (1.0 - fc) + src[r1 * w + c1] * fc;
            out.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    out
}

/// Min-max normalisation; an identically zero map is left as is.
fn normalize(v: &mut [f64]) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= 0.0 && lo >= 0.0 {
        return;
    }
    let span = hi - lo;
    for x in v.iter_mut() {
        *x = if span > 0.0 { (*x - lo) / span } else { 1.0 };
    }
}

/// Writes each map as an 8-bit binary PGM, `{stem}_frame{i}.pgm`. Returns the paths.
pub fn export_saliency(maps: &[Tensor], dir: &Path, stem: &str) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(maps.len());
    for (i, m) in maps.iter().enumerate() {
        let [h, w] = [m.shape()[0], m.shape()[1]];
        let img = Image::from_values(h, w, 1, m.data())?;
        let path = dir.join(format!("{stem}_frame{i}.pgm"));
        img.write_pnm(&path)?;
        paths.push(path);
    }
    Ok(paths)
}
