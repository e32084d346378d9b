//! Season-level driving: rollouts, hindsight relabeling, update schedules
//! and deterministic validation.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::agent::{Agent, UpdateStats};
use crate::buffers::{her_relabel, FeatureFn, OnPolicyStep, ReplayBuffer, SuccessPool, TrajectoryBuffer, Transition};
use crate::envs::{EnvConfig, EnvState};
use crate::error::Result;
use crate::featnet::{extract, ObservationStack};
use crate::image::Image;

/// Environment steps per season.
pub const SEASON_STEPS: usize = 1024;
/// Episodes per validation.
pub const VALIDATION_EPISODES: usize = 50;

/// An episode in progress.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub env: EnvState,
    pub stack: ObservationStack,
    pub episode: Vec<Transition>,
    pub episode_return: f64,
}

/// Buffers and rollout state owned by the training loop.
#[derive(Debug, Clone)]
pub struct Experience {
    pub replay: Option<ReplayBuffer>,
    pub trajectory: TrajectoryBuffer,
    pub pool: SuccessPool,
    pub rollout: Option<Rollout>,
    /// Source of episode seeds and relabeling draws.
    pub rng: ChaCha8Rng,
}

impl Experience {
    pub fn new(agent: &Agent, seed: u64) -> Result<Self> {
        let cfg = &agent.cfg;
        let replay = if cfg.algo.off_policy() {
            Some(ReplayBuffer::new(cfg.buffer_size, seed ^ 0x7e91_a000)?)
        } else {
            None
        };
        let pool_cap = cfg.her.as_ref().map_or(0, |h| h.success_pool_capacity);
        Ok(Self {
            replay,
            trajectory: TrajectoryBuffer::new(cfg.trajectory_length),
            pool: SuccessPool::new(pool_cap),
            rollout: None,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0xe9_150de),
        })
    }
}

/// What one season produced.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SeasonStats {
    pub steps: usize,
    pub episodes: usize,
    /// NaN when no episode finished this season.
    pub train_return_mean: f64,
    pub train_return_max: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
}

/// Feature-space goal embedding used by the feature-distance HER variant:
/// a stack of the goal frame with a zero goal channel, current trunk, eval mode.
fn goal_features(agent: &Agent, frame: &Image) -> Result<crate::netlib::Tensor> {
    let stack = ObservationStack::new(Arc::new(frame.clone()), agent.cfg.features.stack_size);
    extract(&agent.features.net, &stack.to_goal_tensor(None)?)
}

fn finish_episode(agent: &Agent, exp: &mut Experience, episode: Vec<Transition>) -> Result<()> {
    let (Some(her), Some(replay)) = (agent.cfg.her.as_ref(), exp.replay.as_mut()) else {
        return Ok(());
    };
    let f = |img: &Image| goal_features(agent, img);
    let feature_fn: Option<&FeatureFn<'_>> = if her.use_features { Some(&f) } else { None };
    for t in her_relabel(&episode, her, &exp.pool, feature_fn, &mut exp.rng)? {
        replay.append(t);
    }
    Ok(())
}

/// Collects `trajectory_length` environment steps, feeds the buffers and runs
/// the agent's update schedule. Episodes continue across season boundaries.
pub fn train_season(agent: &mut Agent, exp: &mut Experience) -> Result<SeasonStats> {
    let env: EnvConfig = agent.cfg.env.clone();
    let steps = agent.cfg.trajectory_length;
    let stack_size = agent.cfg.features.stack_size;
    let keep_episode = agent.cfg.her.is_some();
    exp.trajectory.clear();
    let mut returns = Vec::new();
    let mut last_done = true;
    for _ in 0..steps {
        let mut ro = match exp.rollout.take() {
            Some(r) => r,
            None => {
                let (state, obs) = env.reset(exp.rng.random());
                Rollout {
                    env: state,
                    stack: ObservationStack::new(Arc::new(obs), stack_size),
                    episode: Vec::new(),
                    episode_return: 0.0,
                }
            }
        };
        let choice = agent.act(&ro.stack, false)?;
        let result = env.step(&mut ro.env, &choice.action)?;
        let frame = Arc::new(result.obs);
        let next = ro.stack.pushed(frame.clone());
        let t = Transition::new(
            ro.stack.clone(),
            choice.action.clone(),
            result.reward,
            next.clone(),
            result.done,
        );
        if agent.cfg.algo.on_policy() {
            exp.trajectory.push(OnPolicyStep {
                transition: t.clone(),
                pre_tanh: choice.pre_tanh,
                log_prob: choice.log_prob,
                value: choice.value,
            })?;
        }
        if result.info.success {
            exp.pool.push(frame);
        }
        if keep_episode {
            ro.episode.push(t.clone());
        }
        if let Some(replay) = exp.replay.as_mut() {
            replay.append(t);
        }
        ro.episode_return += result.reward;
        ro.stack = next;
        last_done = result.done;
        if result.done {
            returns.push(ro.episode_return);
            let episode = std::mem::take(&mut ro.episode);
            finish_episode(agent, exp, episode)?;
        } else {
            exp.rollout = Some(ro);
        }
    }
    exp.trajectory.bootstrap_value = match (&exp.rollout, last_done) {
        (Some(ro), false) => agent.value(&ro.stack)?,
        _ => 0.0,
    };

    let update = match agent.cfg.algo {
        super::Algo::Sac => match exp.replay.as_mut() {
            Some(replay) => agent.sac_update(replay)?,
            None => UpdateStats::default(),
        },
        super::Algo::Ppo => agent.ppo_update(&exp.trajectory)?,
        super::Algo::Ipg | super::Algo::IpgHer => {
            let replay = exp.replay.as_mut().expect("ipg keeps a replay buffer");
            agent.ipg_update(&exp.trajectory, replay)?
        }
    };
    let (mean, max) = if returns.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (
            returns.iter().sum::<f64>() / returns.len() as f64,
            returns.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    };
    Ok(SeasonStats {
        steps,
        episodes: returns.len(),
        train_return_mean: mean,
        train_return_max: max,
        actor_loss: update.actor_loss,
        critic_loss: update.critic_loss,
    })
}

/// Mean return of `episodes` deterministic episodes (`tanh(mean)` actions).
/// Episode seeds derive from `seed`; the agent is not modified.
pub fn validate(agent: &Agent, env: &EnvConfig, episodes: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..episodes {
        let (mut state, obs) = env.reset(rng.random());
        let mut stack = ObservationStack::new(Arc::new(obs), agent.cfg.features.stack_size);
        while !state.done {
            let action = agent.act_greedy(&stack)?;
            let r = env.step(&mut state, &action)?;
            total += r.reward;
            stack = stack.pushed(Arc::new(r.obs));
        }
    }
    Ok(if episodes == 0 { 0.0 } else { total / episodes as f64 })
}
