//! Tanh-squashed diagonal Gaussian policy over a network's raw output.
//!
//! The policy net emits `2·A` values per sample: `A` means followed by `A`
//! log standard deviations. Log-stds are clamped to `[-20, 2]` and
//! log-probabilities floored at `-30`; clamped entries pass no gradient.

use crate::error::{Error, Result};
use crate::netlib::Tensor;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
pub const LOG_PROB_FLOOR: f64 = -30.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// `ln(1 - tanh²u)`, stable for large `|u|`.
pub fn log_tanh_jacobian(u: f64) -> f64 {
    let softplus = |x: f64| if x > 30.0 { x } else { x.exp().ln_1p() };
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// Per-sample Gaussian parameters decoded from a `(B, 2A)` policy output.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub batch: usize,
    pub dim: usize,
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    /// Whether the raw log-std fell outside the clamp range.
    pub clamped: Vec<bool>,
}

impl PolicyParams {
    pub fn from_output(out: &Tensor, dim: usize) -> Result<Self> {
        let shape = out.shape();
        if shape.len() != 2 || shape[1] != 2 * dim {
            return Err(Error::shape(format!("policy output {shape:?} for action dim {dim}")));
        }
        let batch = shape[0];
        let mut mean = Vec::with_capacity(batch * dim);
        let mut log_std = Vec::with_capacity(batch * dim);
        let mut clamped = Vec::with_capacity(batch * dim);
        for b in 0..batch {
            let row = out.row(b);
            mean.extend_from_slice(&row[..dim]);
            for &raw in &row[dim..] {
                log_std.push(raw.clamp(LOG_STD_MIN, LOG_STD_MAX));
                clamped.push(!(LOG_STD_MIN..=LOG_STD_MAX).contains(&raw));
            }
        }
        Ok(Self {
            batch,
            dim,
            mean,
            log_std,
            clamped,
        })
    }

    /// `tanh(mean)`.
    pub fn deterministic(&self) -> Vec<f64> {
        self.mean.iter().map(|m| m.tanh()).collect()
    }

    /// Packs per-entry gradients w.r.t. mean and log-std into a `(B, 2A)` tensor.
    fn pack(&self, d_mean: &[f64], d_log_std: &[f64]) -> Tensor {
        let (b, a) = (self.batch, self.dim);
        let mut g = Vec::with_capacity(b * 2 * a);
        for i in 0..b {
            g.extend_from_slice(&d_mean[i * a..(i + 1) * a]);
            let rows = i * a..(i + 1) * a;
            for (&c, &d) in self.clamped[rows.clone()].iter().zip(&d_log_std[rows]) {
                g.push(if c { 0.0 } else { d });
            }
        }
        Tensor::new(vec![b, 2 * a], g).expect("packed gradient shape")
    }
}

/// Reparameterised draw `u = mean + σ·ε`, `a = tanh(u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReparamSample {
    pub eps: Vec<f64>,
    pub u: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: Vec<f64>,
    pub floored: Vec<bool>,
}

pub fn sample(p: &PolicyParams, eps: &[f64]) -> Result<ReparamSample> {
    if eps.len() != p.mean.len() {
        return Err(Error::shape(format!(
            "{} noise values for {} actions",
            eps.len(),
            p.mean.len()
        )));
    }
    let u: Vec<f64> = (0..eps.len())
        .map(|j| p.mean[j] + p.log_std[j].exp() * eps[j])
        .collect();
    let action = u.iter().map(|x| x.tanh()).collect();
    let mut log_prob = Vec::with_capacity(p.batch);
    let mut floored = Vec::with_capacity(p.batch);
    for b in 0..p.batch {
        let lp: f64 = (b * p.dim..(b + 1) * p.dim)
            .map(|j| -0.5 * eps[j] * eps[j] - p.log_std[j] - HALF_LN_2PI - log_tanh_jacobian(u[j]))
            .sum();
        floored.push(lp < LOG_PROB_FLOOR);
        log_prob.push(lp.max(LOG_PROB_FLOOR));
    }
    Ok(ReparamSample {
        eps: eps.to_vec(),
        u,
        action,
        log_prob,
        floored,
    })
}

/// Gradient w.r.t. the raw policy output of a loss with partials `dl_da`
/// (per action entry) and `dl_dlogp` (per sample), noise held fixed.
pub fn sample_backward(p: &PolicyParams, s: &ReparamSample, dl_da: &[f64], dl_dlogp: &[f64]) -> Tensor {
    let n = p.mean.len();
    let mut d_mean = vec![0.0; n];
    let mut d_ls = vec![0.0; n];
    for j in 0..n {
        let b = j / p.dim;
        let t = s.action[j];
        let sigma_eps = p.log_std[j].exp() * s.eps[j];
        let da = dl_da[j] * (1.0 - t * t);
        let dlp = if s.floored[b] { 0.0 } else { dl_dlogp[b] };
        d_mean[j] = da + dlp * 2.0 * t;
        d_ls[j] = da * sigma_eps + dlp * (-1.0 + 2.0 * t * sigma_eps);
    }
    p.pack(&d_mean, &d_ls)
}

/// Log-density of the squashed action with pre-squash value `u`.
pub fn log_prob(p: &PolicyParams, u: &[f64]) -> Result<(Vec<f64>, Vec<bool>)> {
    if u.len() != p.mean.len() {
        return Err(Error::shape(format!(
            "{} pre-squash values for {} actions",
            u.len(),
            p.mean.len()
        )));
    }
    let mut lps = Vec::with_capacity(p.batch);
    let mut floored = Vec::with_capacity(p.batch);
    for b in 0..p.batch {
        let lp: f64 = (b * p.dim..(b + 1) * p.dim)
            .map(|j| {
                let z = (u[j] - p.mean[j]) * (-p.log_std[j]).exp();
                -0.5 * z * z - p.log_std[j] - HALF_LN_2PI - log_tanh_jacobian(u[j])
            })
            .sum();
        floored.push(lp < LOG_PROB_FLOOR);
        lps.push(lp.max(LOG_PROB_FLOOR));
    }
    Ok((lps, floored))
}

/// Gradient w.r.t. the raw policy output of `Σ_b dl_dlogp[b]·logπ(u_b)`.
pub fn log_prob_backward(p: &PolicyParams, u: &[f64], floored: &[bool], dl_dlogp: &[f64]) -> Tensor {
    let n = p.mean.len();
    let mut d_mean = vec![0.0; n];
    let mut d_ls = vec![0.0; n];
    for j in 0..n {
        let b = j / p.dim;
        if floored[b] {
            continue;
        }
        let inv_sigma = (-p.log_std[j]).exp();
        let z = (u[j] - p.mean[j]) * inv_sigma;
        d_mean[j] = dl_dlogp[b] * z * inv_sigma;
        d_ls[j] = dl_dlogp[b] * (z * z - 1.0);
    }
    p.pack(&d_mean, &d_ls)
}
