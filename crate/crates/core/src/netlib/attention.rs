//! Spatial self-attention over convolutional feature maps.
//!
//! A map of shape `(H, W, C)` is read as `H·W` tokens of width `C`; queries, keys
//! and values are all the tokens themselves. The attended map is merged back
//! with its input according to an [`Arch`].

use super::linalg::{matmul_a_bt_acc, matmul_acc, matmul_at_b_acc, sigmoid, softmax_rows};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    /// Scaled dot-product scores.
    Luong,
    /// Additive scores `vᵀ tanh(W₁q + W₂k)`.
    Bahdanau,
}

impl AttentionKind {
    pub fn name(self) -> &'static str {
        match self {
            AttentionKind::Luong => "luong",
            AttentionKind::Bahdanau => "bahdanau",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "luong" => Some(AttentionKind::Luong),
            "bahdanau" => Some(AttentionKind::Bahdanau),
            _ => None,
        }
    }
}

/// How the attention output `a` is merged with its input `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    /// `y = a`
    Replace,
    /// `y = x + a`
    Add,
    /// `y = x ⊙ a`
    Multiply,
    /// `y = σ(x ⊙ a)`
    Gate,
}

impl Arch {
    pub fn from_index(i: u32) -> Result<Self> {
        match i {
            0 => Ok(Arch::Replace),
            1 => Ok(Arch::Add),
            2 => Ok(Arch::Multiply),
            3 => Ok(Arch::Gate),
            _ => Err(Error::InvalidArgument(format!(
                "attention arch must be in 0..=3, got {i}"
            ))),
        }
    }

    pub fn index(self) -> u32 {
        match self {
            Arch::Replace => 0,
            Arch::Add => 1,
            Arch::Multiply => 2,
            Arch::Gate => 3,
        }
    }
}

/// Element-wise merge of an input with its attention output.
pub fn attention_combine(x: &Tensor, a: &Tensor, arch: Arch) -> Result<Tensor> {
    if arch == Arch::Replace {
        return Ok(a.clone());
    }
    if x.shape() != a.shape() {
        return Err(Error::shape(format!(
            "attention combine arch {} needs equal shapes, got {:?} and {:?}",
            arch.index(),
            x.shape(),
            a.shape()
        )));
    }
    let mut out = x.clone();
    combine_into(x.data(), a.data(), arch, out.data_mut());
    Ok(out)
}

fn combine_into(x: &[f64], a: &[f64], arch: Arch, out: &mut [f64]) {
    for ((o, &xv), &av) in out.iter_mut().zip(x).zip(a) {
        *o = match arch {
            Arch::Replace => av,
            Arch::Add => xv + av,
            Arch::Multiply => xv * av,
            Arch::Gate => sigmoid(xv * av),
        };
    }
}

/// Splits `dL/dy` into `(dL/dx, dL/da)` contributions for the merge.
fn combine_backward(x: &[f64], a: &[f64], gy: &[f64], arch: Arch, gx: &mut [f64], ga: &mut [f64]) {
    for i in 0..gy.len() {
        match arch {
            Arch::Replace => ga[i] = gy[i],
            Arch::Add => {
                gx[i] += gy[i];
                ga[i] = gy[i];
            }
            Arch::Multiply => {
                gx[i] += gy[i] * a[i];
                ga[i] = gy[i] * x[i];
            }
            Arch::Gate => {
                let s = sigmoid(x[i] * a[i]);
                let gs = gy[i] * s * (1.0 - s);
                gx[i] += gs * a[i];
                ga[i] = gs * x[i];
            }
        }
    }
}

/// Score parameters for [`attention_scores`].
#[derive(Debug, Clone, Copy)]
pub enum Scorer<'a> {
    Luong,
    Bahdanau {
        /// `(C, D)` query projection.
        w_query: &'a Tensor,
        /// `(C, D)` key projection.
        w_key: &'a Tensor,
        /// `(D)` score vector.
        v: &'a Tensor,
    },
}

/// Softmax-normalized attention weights `(Nq, Nk)` for token matrices `q: (Nq, C)`
/// and `k: (Nk, C)`. Each row sums to one.
pub fn attention_scores(q: &Tensor, k: &Tensor, scorer: Scorer<'_>) -> Result<Tensor> {
    if q.shape().len() != 2 || k.shape().len() != 2 {
        return Err(Error::shape("attention tokens must be (tokens, channels)"));
    }
    let (nq, c) = (q.shape()[0], q.shape()[1]);
    let nk = k.shape()[0];
    if k.shape()[1] != c {
        return Err(Error::shape(format!(
            "query width {c} differs from key width {}",
            k.shape()[1]
        )));
    }
    let mut scores = vec![0.0; nq * nk];
    match scorer {
        Scorer::Luong => {
            matmul_a_bt_acc(q.data(), k.data(), nq, c, nk, &mut scores);
            let scale = 1.0 / (c as f64).sqrt();
            scores.iter_mut().for_each(|s| *s *= scale);
        }
        Scorer::Bahdanau { w_query, w_key, v } => {
            let d = v.len();
            if w_query.shape() != [c, d] || w_key.shape() != [c, d] {
                return Err(Error::shape("bahdanau projections must be (C, D)"));
            }
            let mut qp = vec![0.0; nq * d];
            let mut kp = vec![0.0; nk * d];
            matmul_acc(q.data(), w_query.data(), nq, c, d, &mut qp);
            matmul_acc(k.data(), w_key.data(), nk, c, d, &mut kp);
            additive_scores(&qp, &kp, v.data(), nq, nk, d, &mut scores);
        }
    }
    softmax_rows(&mut scores, nk);
    Tensor::new(vec![nq, nk], scores)
}

fn additive_scores(qp: &[f64], kp: &[f64], v: &[f64], nq: usize, nk: usize, d: usize, out: &mut [f64]) {
    for i in 0..nq {
        let qi = &qp[i * d..(i + 1) * d];
        for j in 0..nk {
            let kj = &kp[j * d..(j + 1) * d];
            let mut s = 0.0;
            for t in 0..d {
                s += v[t] * (qi[t] + kj[t]).tanh();
            }
            out[i * nk + j] = s;
        }
    }
}

/// Forward cache of one attention layer application.
#[derive(Debug, Clone)]
pub(crate) struct AttentionCache {
    weights: Vec<f64>,
    attended: Vec<f64>,
    q_proj: Vec<f64>,
    k_proj: Vec<f64>,
}

/// Forward for a batch of `images` maps, each `tokens × channels`, laid out
/// contiguously in `x`. Bahdanau parameters are `(w_query, w_key, v)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn forward_maps(
    x: &[f64],
    images: usize,
    tokens: usize,
    channels: usize,
    kind: AttentionKind,
    arch: Arch,
    params: Option<(&[f64], &[f64], &[f64])>,
    out: &mut [f64],
) -> AttentionCache {
    let map = tokens * channels;
    let mut weights = vec![0.0; images * tokens * tokens];
    let mut attended = vec![0.0; images * map];
    let d = params.map(|p| p.2.len()).unwrap_or(0);
    let mut q_proj = vec![0.0; images * tokens * d];
    let mut k_proj = vec![0.0; images * tokens * d];
    for img in 0..images {
        let xi = &x[img * map..(img + 1) * map];
        let wi = &mut weights[img * tokens * tokens..(img + 1) * tokens * tokens];
        match kind {
            AttentionKind::Luong => {
                matmul_a_bt_acc(xi, xi, tokens, channels, tokens, wi);
                let scale = 1.0 / (channels as f64).sqrt();
                wi.iter_mut().for_each(|s| *s *= scale);
            }
            AttentionKind::Bahdanau => {
                let (wq, wk, v) = params.expect("bahdanau parameters");
                let qp = &mut q_proj[img * tokens * d..(img + 1) * tokens * d];
                matmul_acc(xi, wq, tokens, channels, d, qp);
                let kp = &mut k_proj[img * tokens * d..(img + 1) * tokens * d];
                matmul_acc(xi, wk, tokens, channels, d, kp);
                let qp = &q_proj[img * tokens * d..(img + 1) * tokens * d];
                let kp = &k_proj[img * tokens * d..(img + 1) * tokens * d];
                additive_scores(qp, kp, v, tokens, tokens, d, wi);
            }
        }
        softmax_rows(wi, tokens);
        let ai = &mut attended[img * map..(img + 1) * map];
        matmul_acc(wi, xi, tokens, tokens, channels, ai);
        combine_into(xi, ai, arch, &mut out[img * map..(img + 1) * map]);
    }
    AttentionCache {
        weights,
        attended,
        q_proj,
        k_proj,
    }
}

/// Gradients of a Bahdanau layer's parameters.
pub(crate) struct BahdanauGrads<'a> {
    pub w_query: &'a [f64],
    pub w_key: &'a [f64],
    pub v: &'a [f64],
    pub g_query: &'a mut [f64],
    pub g_key: &'a mut [f64],
    pub g_v: &'a mut [f64],
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward_maps(
    x: &[f64],
    cache: &AttentionCache,
    gy: &[f64],
    images: usize,
    tokens: usize,
    channels: usize,
    kind: AttentionKind,
    arch: Arch,
    mut bahdanau: Option<BahdanauGrads<'_>>,
    gx: &mut [f64],
) {
    let map = tokens * channels;
    let nn = tokens * tokens;
    let mut ga = vec![0.0; map];
    let mut gw = vec![0.0; nn];
    for img in 0..images {
        let xi = &x[img * map..(img + 1) * map];
        let ai = &cache.attended[img * map..(img + 1) * map];
        let wi = &cache.weights[img * nn..(img + 1) * nn];
        let gyi = &gy[img * map..(img + 1) * map];
        let gxi = &mut gx[img * map..(img + 1) * map];
        ga.iter_mut().for_each(|v| *v = 0.0);
        combine_backward(xi, ai, gyi, arch, gxi, &mut ga);

        // attended = W · X
        gw.iter_mut().for_each(|v| *v = 0.0);
        matmul_a_bt_acc(&ga, xi, tokens, channels, tokens, &mut gw);
        matmul_at_b_acc(wi, &ga, tokens, tokens, channels, gxi);

        // softmax rows -> raw score gradient, in place
        for (wr, gr) in wi.chunks(tokens).zip(gw.chunks_mut(tokens)) {
            let inner: f64 = wr.iter().zip(gr.iter()).map(|(a, b)| a * b).sum();
            for (g, &w) in gr.iter_mut().zip(wr) {
                *g = w * (*g - inner);
            }
        }

        match kind {
            AttentionKind::Luong => {
                let scale = 1.0 / (channels as f64).sqrt();
                gw.iter_mut().for_each(|g| *g *= scale);
                // S = X Xᵀ: dX += G X + Gᵀ X
                matmul_acc(&gw, xi, tokens, tokens, channels, gxi);
                matmul_at_b_acc(&gw, xi, tokens, tokens, channels, gxi);
            }
            AttentionKind::Bahdanau => {
                let p = bahdanau.as_mut().expect("bahdanau gradients");
                let d = p.v.len();
                let qp = &cache.q_proj[img * tokens * d..(img + 1) * tokens * d];
                let kp = &cache.k_proj[img * tokens * d..(img + 1) * tokens * d];
                let mut gq = vec![0.0; tokens * d];
                let mut gk = vec![0.0; tokens * d];
                for i in 0..tokens {
                    for j in 0..tokens {
                        let ge = gw[i * tokens + j];
                        if ge == 0.0 {
                            continue;
                        }
                        for t in 0..d {
                            let th = (qp[i * d + t] + kp[j * d + t]).tanh();
                            p.g_v[t] += ge * th;
                            let gpre = ge * p.v[t] * (1.0 - th * th);
                            gq[i * d + t] += gpre;
                            gk[j * d + t] += gpre;
                        }
                    }
                }
                matmul_at_b_acc(xi, &gq, tokens, channels, d, p.g_query);
                matmul_at_b_acc(xi, &gk, tokens, channels, d, p.g_key);
                matmul_a_bt_acc(&gq, p.w_query, tokens, d, channels, gxi);
                matmul_a_bt_acc(&gk, p.w_key, tokens, d, channels, gxi);
            }
        }
    }
}
