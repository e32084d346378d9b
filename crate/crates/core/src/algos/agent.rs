//! The SAC, PPO and IPG agents: network ownership, acting and the
//! per-minibatch update rules.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::losses::{moments, normalize, q_target, sac_q_target};
use super::nets::{
    critic_loss, head_values, ipg_loss, policy_net, ppo_actor_loss, q_head, sac_actor_loss, v_head, Learner,
    OffPolicyBatch, OnPolicyBatch, TrustRegion,
};
use super::policy::{log_prob, sample, PolicyParams};
use crate::buffers::{HerConfig, ReplayBuffer, TrajectoryBuffer, Transition};
use crate::envs::EnvConfig;
use crate::error::{Error, Result};
use crate::featnet::{goal_conditioned, make_feature_net, FeatureNetSpec, ObservationStack};
use crate::image::Image;
use crate::netlib::{polyak_update, NetworkGraph, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Sac,
    Ppo,
    Ipg,
    IpgHer,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Sac => "sac",
            Algo::Ppo => "ppo",
            Algo::Ipg => "ipg",
            Algo::IpgHer => "ipg_her",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sac" => Some(Algo::Sac),
            "ppo" => Some(Algo::Ppo),
            "ipg" => Some(Algo::Ipg),
            "ipg_her" => Some(Algo::IpgHer),
            _ => None,
        }
    }

    pub fn on_policy(self) -> bool {
        !matches!(self, Algo::Sac)
    }

    pub fn off_policy(self) -> bool {
        !matches!(self, Algo::Ppo)
    }

    fn q_heads(self) -> usize {
        match self {
            Algo::Sac | Algo::Ipg | Algo::IpgHer => 2,
            Algo::Ppo => 0,
        }
    }
}

/// Everything an agent needs to act and learn.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub algo: Algo,
    pub env: EnvConfig,
    pub features: FeatureNetSpec,
    pub hidden: usize,
    pub her: Option<HerConfig>,
    pub buffer_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub trajectory_length: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    pub polyak: f64,
    pub clip: f64,
    pub gae_lambda: f64,
    pub entropy_alpha: f64,
    pub ipg_nu: f64,
}

impl AgentConfig {
    pub fn new(algo: Algo, env: EnvConfig) -> Self {
        Self {
            algo,
            env,
            features: FeatureNetSpec::default(),
            hidden: 64,
            her: None,
            buffer_size: 20_000,
            batch_size: 128,
            epochs: 20,
            trajectory_length: 1024,
            gamma: 0.995,
            learning_rate: 0.002,
            polyak: 0.995,
            clip: 0.2,
            gae_lambda: 0.7,
            entropy_alpha: 0.2,
            ipg_nu: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        self.env.validate()?;
        self.features.validate()?;
        if let Some(h) = &self.her {
            h.validate()?;
        }
        if self.hidden == 0 || self.batch_size == 0 || self.trajectory_length == 0 || self.buffer_size == 0 {
            return bad("network and buffer sizes must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!("gae lambda {} outside [0, 1]", self.gae_lambda));
        }
        if !(0.0..=1.0).contains(&self.polyak) {
            return bad(format!("polyak {} outside [0, 1]", self.polyak));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad(format!("clip {} outside (0, 1)", self.clip));
        }
        if !(0.0..=1.0).contains(&self.ipg_nu) {
            return bad(format!("ipg nu {} outside [0, 1]", self.ipg_nu));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be non-negative", self.learning_rate));
        }
        if !(self.entropy_alpha >= 0.0 && self.entropy_alpha.is_finite()) {
            return bad(format!("entropy alpha {} must be non-negative", self.entropy_alpha));
        }
        Ok(())
    }

    pub fn frame_shape(&self) -> [usize; 3] {
        goal_conditioned(self.env.obs_shape)
    }
}

/// Action chosen for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChoice {
    pub action: Vec<f64>,
    pub pre_tanh: Vec<f64>,
    pub log_prob: f64,
    /// State value when the agent has a value head, else 0.
    pub value: f64,
}

/// Mean losses over one update round.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub minibatches: usize,
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub cfg: AgentConfig,
    /// Shared trunk, trained by the critic losses only.
    pub features: Learner,
    pub actor: Learner,
    pub q: Vec<Learner>,
    pub v: Option<Learner>,
    pub target_features: NetworkGraph,
    pub target_q: Vec<NetworkGraph>,
    pub rng: ChaCha8Rng,
}

/// `(B, T, H, W, 2C)` batch of stacks with their goals (zeros when absent).
pub fn stack_batch<'a, I>(items: I) -> Result<Tensor>
where
    I: IntoIterator<Item = (&'a ObservationStack, Option<&'a Image>)>,
{
    let mut data = Vec::new();
    let mut shape = None;
    let mut n = 0;
    for (stack, goal) in items {
        let [h, w, c] = stack.frame_shape();
        let s = [stack.len(), h, w, 2 * c];
        if *shape.get_or_insert(s) != s {
            return Err(Error::shape("stacks in a batch differ in shape"));
        }
        if let Some(g) = goal {
            if g.shape() != [h, w, c] {
                return Err(Error::shape("goal does not match the observation frames"));
            }
        }
        stack.write_values(goal, true, &mut data);
        n += 1;
    }
    let s = shape.ok_or_else(|| Error::shape("empty batch"))?;
    Tensor::new(vec![n, s[0], s[1], s[2], s[3]], data)
}

fn normal_noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

impl Agent {
    pub fn new(cfg: AgentConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let lr = cfg.learning_rate;
        let f = cfg.features.feature_dim;
        let a = cfg.env.action_dim;
        let features = make_feature_net(&cfg.features, cfg.frame_shape(), seed)?;
        let actor = policy_net(f, a, cfg.hidden, seed.wrapping_add(1))?;
        let q: Vec<Learner> = (0..cfg.algo.q_heads())
            .map(|i| {
                Ok(Learner::new(
                    q_head(f, a, cfg.hidden, seed.wrapping_add(2 + i as u64))?,
                    lr,
                ))
            })
            .collect::<Result<_>>()?;
        let v = if cfg.algo.on_policy() {
            Some(Learner::new(v_head(f, cfg.hidden, seed.wrapping_add(5))?, lr))
        } else {
            None
        };
        Ok(Self {
            target_features: features.clone(),
            target_q: q.iter().map(|l| l.net.clone()).collect(),
            features: Learner::new(features, lr),
            actor: Learner::new(actor, lr),
            q,
            v,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a9e7),
            cfg,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.cfg.env.action_dim
    }

    /// Online networks in a fixed order.
    pub fn networks(&self) -> Vec<(String, &NetworkGraph)> {
        let mut v = vec![
            ("features".to_string(), &self.features.net),
            ("actor".to_string(), &self.actor.net),
        ];
        for (i, q) in self.q.iter().enumerate() {
            v.push((format!("q{i}"), &q.net));
        }
        if let Some(h) = &self.v {
            v.push(("v".to_string(), &h.net));
        }
        v
    }

    /// FNV-style digest over every online and target parameter.
    pub fn checksum(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        let mut mix = |x: u64| {
            h ^= x;
            h = h.wrapping_mul(0x0100_0000_01b3);
        };
        for (_, n) in self.networks() {
            mix(n.checksum());
        }
        mix(self.target_features.checksum());
        for t in &self.target_q {
            mix(t.checksum());
        }
        h
    }

    /// Chooses an action for `stack` (zero goal). Draws exploration noise
    /// from the agent's stream unless `deterministic`.
    pub fn act(&mut self, stack: &ObservationStack, deterministic: bool) -> Result<ActionChoice> {
        let eps = if deterministic {
            None
        } else {
            Some(normal_noise(&mut self.rng, self.cfg.env.action_dim))
        };
        self.act_with(stack, eps.as_deref())
    }

    /// Deterministic action without touching any state.
    pub fn act_greedy(&self, stack: &ObservationStack) -> Result<Vec<f64>> {
        Ok(self.act_with(stack, None)?.action)
    }

    fn act_with(&self, stack: &ObservationStack, eps: Option<&[f64]>) -> Result<ActionChoice> {
        let x = stack_batch([(stack, None)])?;
        let feats = self.features.net.infer(&x)?;
        let p = PolicyParams::from_output(&self.actor.net.infer(&feats)?, self.action_dim())?;
        let value = match &self.v {
            Some(v) => head_values(&v.net, &feats, None)?[0],
            None => 0.0,
        };
        match eps {
            None => Ok(ActionChoice {
                action: p.deterministic(),
                pre_tanh: p.mean.clone(),
                log_prob: log_prob(&p, &p.mean)?.0[0],
                value,
            }),
            Some(e) => {
                let s = sample(&p, e)?;
                // Recomputed from u so that fresh ratios are exactly 1.
                let lp = log_prob(&p, &s.u)?.0[0];
                Ok(ActionChoice {
                    action: s.action,
                    pre_tanh: s.u,
                    log_prob: lp,
                    value,
                })
            }
        }
    }

    /// State value of `stack` under the value head (0 without one).
    pub fn value(&self, stack: &ObservationStack) -> Result<f64> {
        match &self.v {
            None => Ok(0.0),
            Some(v) => {
                let feats = self.features.net.infer(&stack_batch([(stack, None)])?)?;
                Ok(head_values(&v.net, &feats, None)?[0])
            }
        }
    }

    fn update_targets(&mut self) -> Result<()> {
        let tau = self.cfg.polyak;
        polyak_update(&mut self.target_features, &self.features.net, tau)?;
        for (t, q) in self.target_q.iter_mut().zip(&self.q) {
            polyak_update(t, &q.net, tau)?;
        }
        Ok(())
    }

    fn transitions_input(batch: &[&Transition], next: bool) -> Result<Tensor> {
        stack_batch(
            batch
                .iter()
                .map(|t| (if next { &t.s_next } else { &t.s }, t.goal.as_deref())),
        )
    }

    fn flat_actions(batch: &[&Transition]) -> Vec<f64> {
        batch.iter().flat_map(|t| t.a.iter().copied()).collect()
    }

    /// Bellman targets for Q heads on a replay minibatch, with the next
    /// action drawn from the current policy.
    fn q_targets(&mut self, batch: &[&Transition]) -> Result<Vec<f64>> {
        let x_next = Self::transitions_input(batch, true)?;
        let online = self.features.net.infer(&x_next)?;
        let p = PolicyParams::from_output(&self.actor.net.infer(&online)?, self.action_dim())?;
        let eps = normal_noise(&mut self.rng, p.mean.len());
        let s = sample(&p, &eps)?;
        let target_feats = self.target_features.infer(&x_next)?;
        let qs = self
            .target_q
            .iter()
            .map(|t| head_values(t, &target_feats, Some(&s.action)))
            .collect::<Result<Vec<_>>>()?;
        let (gamma, alpha) = (self.cfg.gamma, self.cfg.entropy_alpha);
        Ok(batch
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let r = t.learning_reward();
                if self.cfg.algo == super::Algo::Sac {
                    sac_q_target(r, t.done, qs[0][i], qs[1][i], s.log_prob[i], alpha, gamma)
                } else {
                    // clipped double-Q without the entropy term
                    let q = qs.iter().map(|q| q[i]).fold(f64::INFINITY, f64::min);
                    q_target(r, t.done, q, gamma)
                }
            })
            .collect())
    }

    /// Q-head regression on a replay minibatch; gradients accumulate into the
    /// trunk and the Q heads.
    fn accumulate_q_loss(&mut self, batch: &[&Transition]) -> Result<f64> {
        let y = self.q_targets(batch)?;
        let x = Self::transitions_input(batch, false)?;
        let actions = Self::flat_actions(batch);
        let mut heads: Vec<&mut NetworkGraph> = self.q.iter_mut().map(|l| &mut l.net).collect();
        let targets = vec![y; heads.len()];
        let losses = critic_loss(&mut self.features.net, &mut heads, &x, Some(&actions), &targets, true)?;
        Ok(losses.iter().sum::<f64>() / losses.len() as f64)
    }

    fn step_critics(&mut self) -> Result<()> {
        self.features.step()?;
        for q in &mut self.q {
            q.step()?;
        }
        if let Some(v) = &mut self.v {
            v.step()?;
        }
        Ok(())
    }

    /// One SAC minibatch: twin critics, then the actor, then targets.
    pub fn sac_minibatch(&mut self, batch: &[&Transition]) -> Result<(f64, f64)> {
        let critic = self.accumulate_q_loss(batch)?;
        self.step_critics()?;
        let feats = self.features.net.infer(&Self::transitions_input(batch, false)?)?;
        let eps = normal_noise(&mut self.rng, batch.len() * self.cfg.env.action_dim);
        let critics: Vec<&NetworkGraph> = self.q.iter().map(|l| &l.net).collect();
        let actor = sac_actor_loss(
            &mut self.actor.net,
            &critics,
            &feats,
            &eps,
            self.cfg.entropy_alpha,
            true,
        )?;
        self.actor.step()?;
        self.update_targets()?;
        Ok((actor, critic))
    }

    /// GAE advantages (normalised) and value targets for a trajectory.
    pub fn trajectory_advantages(&self, traj: &TrajectoryBuffer) -> Result<(Vec<f64>, Vec<f64>)> {
        traj.advantages(self.cfg.gamma, self.cfg.gae_lambda)
    }

    /// PPO over one trajectory: `epochs` passes of shuffled minibatches.
    pub fn ppo_update(&mut self, traj: &TrajectoryBuffer) -> Result<UpdateStats> {
        let n = traj.len();
        if n == 0 {
            return Ok(UpdateStats::default());
        }
        let (mut adv, returns) = self.trajectory_advantages(traj)?;
        normalize(&mut adv);
        let mut order: Vec<usize> = (0..n).collect();
        let mut stats = UpdateStats::default();
        let dim = self.action_dim();
        for _ in 0..self.cfg.epochs {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.cfg.batch_size) {
                let steps: Vec<_> = chunk.iter().map(|&i| &traj.steps()[i]).collect();
                let x = stack_batch(steps.iter().map(|s| (&s.transition.s, None)))?;
                let feats = self.features.net.infer(&x)?;
                let u: Vec<f64> = steps.iter().flat_map(|s| s.pre_tanh.iter().copied()).collect();
                let old: Vec<f64> = steps.iter().map(|s| s.log_prob).collect();
                let a: Vec<f64> = chunk.iter().map(|&i| adv[i]).collect();
                let (actor_loss, _) = ppo_actor_loss(&mut self.actor.net, &feats, &u, &old, &a, self.cfg.clip, true)?;
                debug_assert_eq!(u.len(), chunk.len() * dim);
                let y: Vec<f64> = chunk.iter().map(|&i| returns[i]).collect();
                let v = self.v.as_mut().expect("ppo has a value head");
                let loss = critic_loss(&mut self.features.net, &mut [&mut v.net], &x, None, &[y], true)?[0];
                self.actor.step()?;
                self.step_critics()?;
                stats.actor_loss += actor_loss;
                stats.critic_loss += loss;
                stats.minibatches += 1;
            }
        }
        Ok(stats.averaged())
    }

    /// Control-variate residuals `(Â - mean Â - A_w) / std Â` for every
    /// trajectory step, and the factor `1 / std Â` that the critic term must
    /// carry too. `A_w(s, a) = Q(s, a) - Q(s, ã(s))` with one reparameterised
    /// sample `ã`. Scaling the whole estimator, not just `Â`, keeps the
    /// analytic critic term cancelling the control variate.
    pub fn ipg_residuals(&mut self, traj: &TrajectoryBuffer) -> Result<(Vec<f64>, f64)> {
        let (adv, _) = self.trajectory_advantages(traj)?;
        let (mean, std) = moments(&adv);
        let scale = if std > 1e-8 { std.recip() } else { 1.0 };
        let mut out = Vec::with_capacity(adv.len());
        for (c, chunk) in traj.steps().chunks(self.cfg.batch_size).enumerate() {
            let x = stack_batch(chunk.iter().map(|s| (&s.transition.s, None)))?;
            let feats = self.features.net.infer(&x)?;
            let taken: Vec<f64> = chunk.iter().flat_map(|s| s.transition.a.iter().copied()).collect();
            let p = PolicyParams::from_output(&self.actor.net.infer(&feats)?, self.action_dim())?;
            let eps = normal_noise(&mut self.rng, p.mean.len());
            let s = sample(&p, &eps)?;
            let q_taken = head_values(&self.q[0].net, &feats, Some(&taken))?;
            let q_pi = head_values(&self.q[0].net, &feats, Some(&s.action))?;
            for i in 0..chunk.len() {
                let k = c * self.cfg.batch_size + i;
                out.push((adv[k] - mean - (q_taken[i] - q_pi[i])) * scale);
            }
        }
        Ok((out, scale))
    }

    /// IPG over one season: `epochs` rounds, each pairing an on-policy
    /// minibatch with a replay minibatch.
    pub fn ipg_update(&mut self, traj: &TrajectoryBuffer, replay: &mut ReplayBuffer) -> Result<UpdateStats> {
        let n = traj.len();
        if n == 0 {
            return Ok(UpdateStats::default());
        }
        let (residuals, scale) = self.ipg_residuals(traj)?;
        let (_, returns) = self.trajectory_advantages(traj)?;
        let mut stats = UpdateStats::default();
        let b = self.cfg.batch_size;
        for _ in 0..self.cfg.epochs {
            let on_idx = rand::seq::index::sample(&mut self.rng, n, b.min(n)).into_vec();
            let off_idx = if replay.len() >= b {
                Some(replay.sample_indices(b)?)
            } else {
                None
            };
            let off: Option<Vec<&Transition>> =
                off_idx.map(|idx| idx.iter().map(|&i| replay.get(i).expect("sampled slot")).collect());

            // Critics: Q on replay, V on the trajectory, one shared trunk step.
            let mut critic = 0.0;
            if let Some(batch) = &off {
                critic += self.accumulate_q_loss(batch)?;
            }
            let steps: Vec<_> = on_idx.iter().map(|&i| &traj.steps()[i]).collect();
            let x_on = stack_batch(steps.iter().map(|s| (&s.transition.s, None)))?;
            let y: Vec<f64> = on_idx.iter().map(|&i| returns[i]).collect();
            let v = self.v.as_mut().expect("ipg has a value head");
            critic += critic_loss(&mut self.features.net, &mut [&mut v.net], &x_on, None, &[y], true)?[0];
            self.step_critics()?;

            // Actor on detached features.
            let on = OnPolicyBatch {
                feats: self.features.net.infer(&x_on)?,
                u: steps.iter().flat_map(|s| s.pre_tanh.iter().copied()).collect(),
                weights: on_idx.iter().map(|&i| residuals[i]).collect(),
                trust_region: Some(TrustRegion {
                    old_log_prob: steps.iter().map(|s| s.log_prob).collect(),
                    clip: self.cfg.clip,
                }),
            };
            let off_batch = match &off {
                Some(batch) => Some(OffPolicyBatch {
                    feats: self.features.net.infer(&Self::transitions_input(batch, false)?)?,
                    eps: normal_noise(&mut self.rng, batch.len() * self.cfg.env.action_dim),
                    scale,
                }),
                None => None,
            };
            let actor = ipg_loss(
                &mut self.actor.net,
                &self.q[0].net,
                &on,
                off_batch.as_ref(),
                self.cfg.ipg_nu,
                true,
            )?;
            self.actor.step()?;
            self.update_targets()?;
            stats.actor_loss += actor;
            stats.critic_loss += critic;
            stats.minibatches += 1;
        }
        Ok(stats.averaged())
    }

    /// SAC round: `epochs` replay minibatches.
    pub fn sac_update(&mut self, replay: &mut ReplayBuffer) -> Result<UpdateStats> {
        let mut stats = UpdateStats::default();
        if replay.len() < self.cfg.batch_size {
            return Ok(stats);
        }
        for _ in 0..self.cfg.epochs {
            let idx = replay.sample_indices(self.cfg.batch_size)?;
            let batch: Vec<&Transition> = idx.iter().map(|&i| replay.get(i).expect("sampled slot")).collect();
            let (a, c) = self.sac_minibatch(&batch)?;
            stats.actor_loss += a;
            stats.critic_loss += c;
            stats.minibatches += 1;
        }
        Ok(stats.averaged())
    }
}

impl UpdateStats {
    fn averaged(mut self) -> Self {
        if self.minibatches > 0 {
            let n = self.minibatches as f64;
            self.actor_loss /= n;
            self.critic_loss /= n;
        }
        self
    }
}
