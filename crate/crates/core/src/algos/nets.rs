//! Network heads, optimizer pairing and the differentiable actor and critic
//! losses. Losses take explicit feature tensors and noise so that they are
//! pure functions of the parameters.

use super::losses::{mbse_loss, ppo_surrogate, ppo_surrogate_grad};
use super::policy::{log_prob, log_prob_backward, sample, sample_backward, PolicyParams};
use crate::error::{Error, Result};
use crate::netlib::{adam_step, Activation, LayerSpec, Mode, NetworkGraph, OptimizerState, Tensor};

/// A graph with its own Adam state.
#[derive(Debug, Clone)]
pub struct Learner {
    pub net: NetworkGraph,
    pub opt: OptimizerState,
}

impl Learner {
    pub fn new(net: NetworkGraph, learning_rate: f64) -> Self {
        Self {
            net,
            opt: OptimizerState::new(learning_rate),
        }
    }

    /// Applies the accumulated gradients and clears them.
    pub fn step(&mut self) -> Result<()> {
        adam_step(&mut self.net.params_mut(), &mut self.opt)?;
        self.net.zero_grad();
        Ok(())
    }
}

fn mlp(in_dim: usize, hidden: usize, out: usize, seed: u64) -> Result<NetworkGraph> {
    NetworkGraph::build(
        &[
            LayerSpec::Dense {
                units: hidden,
                activation: Activation::Relu,
            },
            LayerSpec::Dense {
                units: out,
                activation: Activation::Linear,
            },
        ],
        &[in_dim],
        seed,
    )
}

/// Features → `(mean, log_std)` per action dimension.
pub fn policy_net(feature_dim: usize, action_dim: usize, hidden: usize, seed: u64) -> Result<NetworkGraph> {
    mlp(feature_dim, hidden, 2 * action_dim, seed)
}

/// `[features, action]` → Q.
pub fn q_head(feature_dim: usize, action_dim: usize, hidden: usize, seed: u64) -> Result<NetworkGraph> {
    mlp(feature_dim + action_dim, hidden, 1, seed)
}

/// Features → V.
pub fn v_head(feature_dim: usize, hidden: usize, seed: u64) -> Result<NetworkGraph> {
    mlp(feature_dim, hidden, 1, seed)
}

fn head_input(feats: &Tensor, actions: Option<&[f64]>) -> Result<Tensor> {
    match actions {
        None => Ok(feats.clone()),
        Some(a) => {
            let b = feats.shape()[0];
            if b == 0 || a.len() % b != 0 {
                return Err(Error::shape(format!("{} action values for batch {b}", a.len())));
            }
            let act = Tensor::new(vec![b, a.len() / b], a.to_vec())?;
            Tensor::concat_cols(feats, &act)
        }
    }
}

/// Head outputs for a feature batch, eval mode.
pub fn head_values(head: &NetworkGraph, feats: &Tensor, actions: Option<&[f64]>) -> Result<Vec<f64>> {
    Ok(head.infer(&head_input(feats, actions)?)?.into_data())
}

/// Q values and `∂Q/∂a` per sample. The head itself is left untouched.
pub fn q_action_gradient(head: &NetworkGraph, feats: &Tensor, actions: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut work = head.clone();
    let q = work.forward(&head_input(feats, Some(actions))?, Mode::Train)?;
    let b = feats.shape()[0];
    let gin = work.backward(&Tensor::filled(&[b, 1], 1.0))?;
    let (_, ga) = gin.split_cols(feats.shape()[1])?;
    Ok((q.into_data(), ga.into_data()))
}

/// Sum of per-head MSBE losses on a shared feature trunk. With `backprop`
/// the gradients are accumulated into `features` and every head.
/// `actions` is `None` for state-value heads.
pub fn critic_loss(
    features: &mut NetworkGraph,
    heads: &mut [&mut NetworkGraph],
    obs: &Tensor,
    actions: Option<&[f64]>,
    targets: &[Vec<f64>],
    backprop: bool,
) -> Result<Vec<f64>> {
    if heads.len() != targets.len() {
        return Err(Error::shape("one target list per critic head"));
    }
    let mode = if backprop { Mode::Train } else { Mode::Eval };
    let feats = features.forward(obs, mode)?;
    let input = head_input(&feats, actions)?;
    let f = feats.shape()[1];
    let mut losses = Vec::with_capacity(heads.len());
    let mut d_feats = Tensor::zeros(feats.shape());
    for (head, y) in heads.iter_mut().zip(targets) {
        let q = head.forward(&input, mode)?;
        let (loss, dq) = mbse_loss(q.data(), y)?;
        losses.push(loss);
        if backprop {
            let gin = head.backward(&Tensor::new(q.shape().to_vec(), dq)?)?;
            let gf = if actions.is_some() { gin.split_cols(f)?.0 } else { gin };
            d_feats.add_scaled(&gf, 1.0)?;
        }
    }
    if backprop {
        features.backward(&d_feats)?;
    }
    Ok(losses)
}

fn actor_forward(actor: &mut NetworkGraph, feats: &Tensor, action_dim: usize, backprop: bool) -> Result<PolicyParams> {
    let out = if backprop {
        actor.forward(feats, Mode::Train)?
    } else {
        actor.infer(feats)?
    };
    PolicyParams::from_output(&out, action_dim)
}

/// `-mean(min_i Q_i(s, ã) - α·logπ(ã|s))` over reparameterised samples
/// `ã = tanh(mean + σ·eps)`.
pub fn sac_actor_loss(
    actor: &mut NetworkGraph,
    critics: &[&NetworkGraph],
    feats: &Tensor,
    eps: &[f64],
    alpha: f64,
    backprop: bool,
) -> Result<f64> {
    weighted_q_loss(actor, critics, feats, eps, alpha, 1.0, backprop)
}

/// `weight` times the SAC actor loss.
fn weighted_q_loss(
    actor: &mut NetworkGraph,
    critics: &[&NetworkGraph],
    feats: &Tensor,
    eps: &[f64],
    alpha: f64,
    weight: f64,
    backprop: bool,
) -> Result<f64> {
    let b = feats.shape()[0];
    let dim = eps.len() / b.max(1);
    let p = actor_forward(actor, feats, dim, backprop)?;
    let s = sample(&p, eps)?;
    let evals = critics
        .iter()
        .map(|c| q_action_gradient(c, feats, &s.action))
        .collect::<Result<Vec<_>>>()?;
    let mut loss = 0.0;
    let mut dl_da = vec![0.0; b * dim];
    let inv = weight / b as f64;
    for i in 0..b {
        let (best, _) = evals
            .iter()
            .enumerate()
            .map(|(k, (q, _))| (k, q[i]))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        loss -= (evals[best].0[i] - alpha * s.log_prob[i]) * inv;
        for j in 0..dim {
            dl_da[i * dim + j] = -evals[best].1[i * dim + j] * inv;
        }
    }
    if backprop {
        let dl_dlogp = vec![alpha * inv; b];
        actor.backward(&sample_backward(&p, &s, &dl_da, &dl_dlogp))?;
    }
    Ok(loss)
}

/// Negative mean clipped surrogate. Returns the loss and the mean ratio.
pub fn ppo_actor_loss(
    actor: &mut NetworkGraph,
    feats: &Tensor,
    u: &[f64],
    old_log_prob: &[f64],
    advantages: &[f64],
    clip: f64,
    backprop: bool,
) -> Result<(f64, f64)> {
    let b = feats.shape()[0];
    if old_log_prob.len() != b || advantages.len() != b {
        return Err(Error::shape("surrogate inputs must align with the batch"));
    }
    let p = actor_forward(actor, feats, u.len() / b, backprop)?;
    let (lp, floored) = log_prob(&p, u)?;
    let inv = 1.0 / b as f64;
    let mut loss = 0.0;
    let mut ratio_sum = 0.0;
    let mut dl_dlogp = vec![0.0; b];
    for i in 0..b {
        let r = (lp[i] - old_log_prob[i]).exp();
        ratio_sum += r;
        loss -= ppo_surrogate(r, advantages[i], clip) * inv;
        dl_dlogp[i] = -ppo_surrogate_grad(r, advantages[i], clip) * r * inv;
    }
    if backprop {
        actor.backward(&log_prob_backward(&p, u, &floored, &dl_dlogp))?;
    }
    Ok((loss, ratio_sum * inv))
}

/// `-mean(logπ(u|s)·weight)`: the likelihood-ratio loss.
pub fn lr_loss(actor: &mut NetworkGraph, feats: &Tensor, u: &[f64], weights: &[f64], backprop: bool) -> Result<f64> {
    let b = feats.shape()[0];
    if weights.len() != b {
        return Err(Error::shape("one weight per sample"));
    }
    let p = actor_forward(actor, feats, u.len() / b, backprop)?;
    let (lp, floored) = log_prob(&p, u)?;
    let inv = 1.0 / b as f64;
    let loss = -lp.iter().zip(weights).map(|(l, w)| l * w).sum::<f64>() * inv;
    if backprop {
        let d: Vec<f64> = weights.iter().map(|w| -w * inv).collect();
        actor.backward(&log_prob_backward(&p, u, &floored, &d))?;
    }
    Ok(loss)
}

/// On-policy half of the interpolated gradient: states, pre-squash actions
/// and the residual weights `Â - A_w`.
///
/// With `trust_region` set, the term is evaluated through the clipped
/// probability ratio against the rollout log-probabilities. Its gradient at
/// the rollout policy is unchanged; once the ratio leaves `1 ± ε` in the
/// improving direction the sample stops contributing.
#[derive(Debug, Clone)]
pub struct OnPolicyBatch {
    pub feats: Tensor,
    pub u: Vec<f64>,
    pub weights: Vec<f64>,
    pub trust_region: Option<TrustRegion>,
}

#[derive(Debug, Clone)]
pub struct TrustRegion {
    pub old_log_prob: Vec<f64>,
    pub clip: f64,
}

/// Off-policy half: replay states, reparameterisation noise and the factor
/// applied to the critic term (the same factor that scaled the on-policy weights).
#[derive(Debug, Clone)]
pub struct OffPolicyBatch {
    pub feats: Tensor,
    pub eps: Vec<f64>,
    pub scale: f64,
}

/// Interpolated policy-gradient loss
/// `-[(1-ν)·mean(logπ(u|s)·w) + scale·mean Q(s', ã(s'))]`.
pub fn ipg_loss(
    actor: &mut NetworkGraph,
    critic: &NetworkGraph,
    on: &OnPolicyBatch,
    off: Option<&OffPolicyBatch>,
    nu: f64,
    backprop: bool,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&nu) {
        return Err(Error::InvalidArgument(format!("mixing factor {nu} outside [0, 1]")));
    }
    let scaled: Vec<f64> = on.weights.iter().map(|w| (1.0 - nu) * w).collect();
    let mut loss = match &on.trust_region {
        None => lr_loss(actor, &on.feats, &on.u, &scaled, backprop)?,
        Some(tr) => ppo_actor_loss(actor, &on.feats, &on.u, &tr.old_log_prob, &scaled, tr.clip, backprop)?.0,
    };
    if let Some(off) = off {
        loss += weighted_q_loss(actor, &[critic], &off.feats, &off.eps, 0.0, off.scale, backprop)?;
    }
    Ok(loss)
}

/// Ascent direction of the loss function `f`, as named gradients. Existing
/// gradients in `actor` are discarded.
fn ascent<F>(actor: &mut NetworkGraph, f: F) -> Result<Vec<(String, Tensor)>>
where
    F: FnOnce(&mut NetworkGraph) -> Result<f64>,
{
    actor.zero_grad();
    f(actor)?;
    let mut grads = actor.gradients();
    actor.zero_grad();
    for (_, g) in &mut grads {
        *g = g.map(|v| -v);
    }
    Ok(grads)
}

/// `mean ∇θ logπθ(a|s)·Â`.
pub fn lr_policy_gradient(
    actor: &mut NetworkGraph,
    feats: &Tensor,
    u: &[f64],
    advantages: &[f64],
) -> Result<Vec<(String, Tensor)>> {
    ascent(actor, |a| lr_loss(a, feats, u, advantages, true))
}

/// `(1-ν)·E_on[∇logπ·(Â - A_w)] + E_off[∇Q̄]`.
pub fn ipg_gradient(
    actor: &mut NetworkGraph,
    critic: &NetworkGraph,
    on: &OnPolicyBatch,
    off: Option<&OffPolicyBatch>,
    nu: f64,
) -> Result<Vec<(String, Tensor)>> {
    ascent(actor, |a| ipg_loss(a, critic, on, off, nu, true))
}
