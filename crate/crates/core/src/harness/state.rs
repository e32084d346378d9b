//! Checkpointing of a whole run: agent networks and optimizers, random
//! streams, the in-progress episode and, optionally, the replay buffer.
//!
//! Frames are shared between stacks, so every distinct frame is stored once
//! in a byte table and referenced by index.

use std::collections::HashMap;
use std::sync::Arc;

use super::config::TrainConfig;
use crate::algos::{Agent, Experience, Rollout};
use crate::buffers::{ReplayBuffer, Transition};
use crate::envs::EnvState;
use crate::error::{Error, Result};
use crate::featnet::ObservationStack;
use crate::image::Image;
use crate::netlib::Checkpoint;
use crate::rngstate;

const NO_FRAME: f64 = -1.0;

#[derive(Default)]
struct FrameTable {
    ids: HashMap<*const Image, usize>,
    bytes: Vec<u8>,
    count: usize,
}

impl FrameTable {
    fn id(&mut self, frame: &Arc<Image>) -> f64 {
        let key = Arc::as_ptr(frame);
        if let Some(&i) = self.ids.get(&key) {
            return i as f64;
        }
        self.bytes.extend_from_slice(frame.raw());
        let i = self.count;
        self.count += 1;
        self.ids.insert(key, i);
        i as f64
    }

    fn stack(&mut self, s: &ObservationStack, out: &mut Vec<f64>) {
        for f in s.frames() {
            out.push(self.id(f));
        }
    }

    fn transition(&mut self, t: &Transition, out: &mut Vec<f64>) {
        self.stack(&t.s, out);
        self.stack(&t.s_next, out);
        out.extend_from_slice(&t.a);
        out.push(t.r);
        out.push(t.done as u8 as f64);
        out.push(t.goal.as_ref().map_or(NO_FRAME, |g| self.id(g)));
        out.push(t.hindsight_reward.unwrap_or(f64::NAN));
    }
}

struct Frames {
    frames: Vec<Arc<Image>>,
}

impl Frames {
    fn decode(bytes: &[u8], shape: [usize; 3]) -> Result<Self> {
        let n = shape.iter().product::<usize>();
        if n == 0 || !bytes.len().is_multiple_of(n) {
            return Err(Error::Checkpoint(
                "frame table size does not match the observation shape".into(),
            ));
        }
        let frames = bytes
            .chunks(n)
            .map(|c| Image::from_raw(shape[0], shape[1], shape[2], c.to_vec()).map(Arc::new))
            .collect::<Result<_>>()?;
        Ok(Self { frames })
    }

    fn get(&self, id: f64) -> Result<Arc<Image>> {
        if id < 0.0 || id.fract() != 0.0 {
            return Err(Error::Checkpoint(format!("bad frame reference {id}")));
        }
        self.frames
            .get(id as usize)
            .cloned()
            .ok_or_else(|| Error::Checkpoint(format!("frame {id} missing from the table")))
    }

    fn stack(&self, ids: &[f64]) -> Result<ObservationStack> {
        ObservationStack::from_frames(ids.iter().map(|&i| self.get(i)).collect::<Result<_>>()?)
    }

    fn transitions(&self, v: &[f64], stack: usize, action: usize) -> Result<Vec<Transition>> {
        let width = 2 * stack + action + 4;
        if !v.len().is_multiple_of(width) {
            return Err(Error::Checkpoint("transition record has a partial row".into()));
        }
        v.chunks(width)
            .map(|row| {
                let (s, rest) = row.split_at(stack);
                let (s_next, rest) = rest.split_at(stack);
                let (a, rest) = rest.split_at(action);
                let mut t = Transition::new(self.stack(s)?, a.to_vec(), rest[0], self.stack(s_next)?, rest[1] != 0.0);
                if rest[2] != NO_FRAME {
                    t.goal = Some(self.get(rest[2])?);
                    t.hindsight_reward = Some(rest[3]);
                }
                Ok(t)
            })
            .collect()
    }
}

fn push_rng(ck: &mut Checkpoint, name: &str, rng: &rand_chacha::ChaCha8Rng) -> Result<()> {
    ck.push_u64s(name, &rngstate::encode(rng))
}

fn load_rng(ck: &Checkpoint, name: &str) -> Result<rand_chacha::ChaCha8Rng> {
    rngstate::decode(&ck.u64s(name)?)
}

fn learners(agent: &mut Agent) -> Vec<(String, &mut crate::algos::Learner)> {
    let mut v = vec![
        ("features".to_string(), &mut agent.features),
        ("actor".to_string(), &mut agent.actor),
    ];
    for (i, q) in agent.q.iter_mut().enumerate() {
        v.push((format!("q{i}"), q));
    }
    if let Some(h) = agent.v.as_mut() {
        v.push(("v".to_string(), h));
    }
    v
}

/// Networks, optimizer moments and the acting stream of `agent`.
pub fn push_agent(ck: &mut Checkpoint, agent: &Agent) -> Result<()> {
    let mut all = vec![
        ("features".to_string(), &agent.features),
        ("actor".to_string(), &agent.actor),
    ];
    all.extend(agent.q.iter().enumerate().map(|(i, q)| (format!("q{i}"), q)));
    all.extend(agent.v.iter().map(|h| ("v".to_string(), h)));
    for (name, l) in all {
        ck.push_network(&format!("net/{name}"), &l.net)?;
        ck.push_optimizer(&format!("opt/{name}"), &l.opt)?;
    }
    ck.push_network("target/features", &agent.target_features)?;
    for (i, t) in agent.target_q.iter().enumerate() {
        ck.push_network(&format!("target/q{i}"), t)?;
    }
    push_rng(ck, "agent/rng", &agent.rng)
}

/// Rebuilds an agent for `cfg` and overwrites its state from `ck`.
pub fn load_agent(ck: &Checkpoint, cfg: &TrainConfig) -> Result<Agent> {
    let mut agent = Agent::new(cfg.agent_config(), cfg.seed)?;
    for (name, l) in learners(&mut agent) {
        ck.load_network(&format!("net/{name}"), &mut l.net)?;
        l.opt = ck.load_optimizer(&format!("opt/{name}"))?;
    }
    ck.load_network("target/features", &mut agent.target_features)?;
    for (i, t) in agent.target_q.iter_mut().enumerate() {
        ck.load_network(&format!("target/q{i}"), t)?;
    }
    agent.rng = load_rng(ck, "agent/rng")?;
    Ok(agent)
}

/// Everything needed to continue a run after `completed` seasons.
pub fn run_checkpoint(cfg: &TrainConfig, agent: &Agent, exp: &Experience, completed: usize) -> Result<Checkpoint> {
    let mut ck = Checkpoint::new();
    ck.push_text("config", &cfg.to_text())?;
    ck.push_u64s("run/completed", &[completed as u64])?;
    push_agent(&mut ck, agent)?;
    push_rng(&mut ck, "exp/rng", &exp.rng)?;

    let mut table = FrameTable::default();
    let pool: Vec<f64> = exp.pool.iter().map(|f| table.id(f)).collect();
    ck.push_values("exp/pool", pool)?;
    if let Some(ro) = &exp.rollout {
        ck.push_values("rollout/env", ro.env.to_values())?;
        let mut stack = Vec::new();
        table.stack(&ro.stack, &mut stack);
        ck.push_values("rollout/stack", stack)?;
        let mut ep = Vec::new();
        for t in &ro.episode {
            table.transition(t, &mut ep);
        }
        ck.push_values("rollout/episode", ep)?;
        ck.push_values("rollout/return", vec![ro.episode_return])?;
    }
    if let Some(replay) = &exp.replay {
        push_rng(&mut ck, "replay/rng", replay.rng())?;
        if cfg.checkpoint_replay {
            let mut rows = Vec::new();
            for t in replay.iter() {
                table.transition(t, &mut rows);
            }
            ck.push_values("replay/items", rows)?;
        }
    }
    ck.push_bytes("frames", &table.bytes)?;
    Ok(ck)
}

/// Restores a run. Returns the agent, its experience and the number of
/// completed seasons. Without a stored replay buffer the buffer restarts empty.
pub fn restore_run(ck: &Checkpoint, cfg: &TrainConfig) -> Result<(Agent, Experience, usize)> {
    let agent = load_agent(ck, cfg)?;
    let mut exp = Experience::new(&agent, cfg.seed)?;
    exp.rng = load_rng(ck, "exp/rng")?;
    let completed = *ck
        .u64s("run/completed")?
        .first()
        .ok_or_else(|| Error::Checkpoint("completed season count missing".into()))? as usize;
    let frames = Frames::decode(&ck.bytes("frames")?, cfg.env.obs_shape)?;
    for &id in ck.values("exp/pool")? {
        exp.pool.push(frames.get(id)?);
    }
    let (stack_size, action) = (cfg.stack_size, cfg.env.action_dim);
    if ck.get("rollout/env").is_some() {
        let stack = frames.stack(ck.values("rollout/stack")?)?;
        if stack.len() != stack_size {
            return Err(Error::Checkpoint("rollout stack size differs from the config".into()));
        }
        let ret = ck.values("rollout/return")?;
        exp.rollout = Some(Rollout {
            env: EnvState::from_values(ck.values("rollout/env")?)?,
            stack,
            episode: frames.transitions(ck.values("rollout/episode")?, stack_size, action)?,
            episode_return: *ret
                .first()
                .ok_or_else(|| Error::Checkpoint("episode return missing".into()))?,
        });
    }
    if exp.replay.is_some() {
        let rng = load_rng(ck, "replay/rng")?;
        let items = match ck.get("replay/items") {
            Some(_) => frames.transitions(ck.values("replay/items")?, stack_size, action)?,
            None => Vec::new(),
        };
        exp.replay = Some(ReplayBuffer::restore(cfg.buffer_size, items, rng)?);
    }
    Ok((agent, exp, completed))
}

/// The configuration snapshot stored in a checkpoint.
pub fn checkpoint_config(ck: &Checkpoint) -> Result<TrainConfig> {
    TrainConfig::parse(&ck.text("config")?)
}
