//! Two seedable, software-rendered control tasks with pixel observations.
//!
//! * `grasp`: a gripper above a tray of 1–5 rectangular objects. Actions are
//!   `(dx, dy, trigger)`; closing the gripper (`trigger > 0.5`) over an object
//!   pays 1 and ends the episode. 48×48×3 observations, 20 steps.
//! * `racer`: a unicycle car chasing a target ball. Actions are `(v, ω)`; the
//!   reward is the per-step decrease in target distance divided by
//!   `step_scale`, plus a bonus on arrival. 40×40×3 observations, 100 steps.
//!
//! Both render flat-coloured shapes with no noise, so a `(seed, actions)` pair
//! always reproduces the same pixels.

mod grasp;
mod racer;
mod raster;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use grasp::{TrayObject, GRIPPER_COLOR, TRAY_COLOR};
pub use racer::{CAR_COLOR, GROUND_COLOR, NOSE_COLOR, TARGET_COLOR};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rngstate;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvId {
    Grasp,
    Racer,
}

impl EnvId {
    pub fn name(self) -> &'static str {
        match self {
            EnvId::Grasp => "grasp",
            EnvId::Racer => "racer",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "grasp" => Some(EnvId::Grasp),
            "racer" => Some(EnvId::Racer),
            _ => None,
        }
    }
}

/// Task constants. Lengths are in arena units; the arena is
/// `[-arena_half_extent, arena_half_extent]²`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub env_id: EnvId,
    pub obs_shape: [usize; 3],
    pub action_dim: usize,
    pub max_steps: usize,
    pub arena_half_extent: f64,
    /// grasp: gripper travel per unit action. racer: reward normaliser.
    pub step_scale: f64,
    pub object_count_range: (usize, usize),
    pub object_half_size: (f64, f64),
    pub gripper_radius: f64,
    /// Minimum distance between the gripper start and any object.
    pub start_clearance: f64,
    pub target_radius: f64,
    /// Minimum initial car-target distance as a fraction of the arena width.
    pub target_min_fraction: f64,
    pub velocity_scale: f64,
    pub angular_scale: f64,
    pub dt: f64,
    pub success_bonus: f64,
}

impl EnvConfig {
    pub fn grasp() -> Self {
        Self {
            env_id: EnvId::Grasp,
            obs_shape: [48, 48, 3],
            action_dim: 3,
            max_steps: 20,
            arena_half_extent: 1.0,
            step_scale: 0.15,
            object_count_range: (1, 5),
            object_half_size: (0.12, 0.2),
            gripper_radius: 0.07,
            start_clearance: 0.3,
            target_radius: 0.12,
            target_min_fraction: 0.3,
            velocity_scale: 0.5,
            angular_scale: 3.0,
            dt: 0.1,
            success_bonus: 5.0,
        }
    }

    pub fn racer() -> Self {
        Self {
            env_id: EnvId::Racer,
            obs_shape: [40, 40, 3],
            action_dim: 2,
            max_steps: 100,
            step_scale: 0.05,
            ..Self::grasp()
        }
    }

    pub fn for_env(id: EnvId) -> Self {
        match id {
            EnvId::Grasp => Self::grasp(),
            EnvId::Racer => Self::racer(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.obs_shape[0] == 0 || self.obs_shape[1] == 0 || self.obs_shape[2] != 3 {
            return bad(format!("observation shape {:?} must be (H, W, 3)", self.obs_shape));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        let positive = [
            ("arena_half_extent", self.arena_half_extent),
            ("step_scale", self.step_scale),
            ("gripper_radius", self.gripper_radius),
            ("target_radius", self.target_radius),
            ("velocity_scale", self.velocity_scale),
            ("dt", self.dt),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        let (lo, hi) = self.object_count_range;
        if lo == 0 || lo > hi {
            return bad(format!("object count range ({lo}, {hi}) is invalid"));
        }
        let (a, b) = self.object_half_size;
        if !(a > 0.0 && a <= b && b < self.arena_half_extent) {
            return bad(format!("object half size range ({a}, {b}) is invalid"));
        }
        if !(0.0..0.5).contains(&self.target_min_fraction) {
            return bad("target_min_fraction must be in [0, 0.5)".into());
        }
        Ok(())
    }

    /// Seeds a new episode.
    pub fn reset(&self, seed: u64) -> (EnvState, Image) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = match self.env_id {
            EnvId::Grasp => grasp::place(self, &mut rng),
            EnvId::Racer => racer::place(self, &mut rng),
        };
        let state = EnvState {
            scene,
            step: 0,
            done: false,
            rng,
        };
        let obs = self.render(&state);
        (state, obs)
    }

    /// Applies `action` (clipped to `[-1, 1]` per dimension).
    pub fn step(&self, state: &mut EnvState, action: &[f64]) -> Result<StepResult> {
        if state.done {
            return Err(Error::Usage("step called on a finished episode".into()));
        }
        if action.len() != self.action_dim {
            return Err(Error::shape(format!(
                "{} expects {} action values, got {}",
                self.env_id.name(),
                self.action_dim,
                action.len()
            )));
        }
        let clipped: Vec<f64> = action
            .iter()
            .map(|a| if a.is_nan() { 0.0 } else { a.clamp(-1.0, 1.0) })
            .collect();
        let (reward, success, distance) = match &mut state.scene {
            Scene::Grasp { gripper, objects } => {
                let (r, s) = grasp::advance(self, gripper, objects, &clipped);
                (r, s, grasp::nearest_distance(*gripper, objects))
            }
            Scene::Racer { car, heading, target } => {
                let (r, s) = racer::advance(self, car, heading, *target, &clipped);
                (r, s, racer::distance(*car, *target))
            }
        };
        state.step += 1;
        state.done = success || state.step >= self.max_steps;
        Ok(StepResult {
            obs: self.render(state),
            reward,
            done: state.done,
            info: StepInfo { success, distance },
        })
    }

    pub fn render(&self, state: &EnvState) -> Image {
        match &state.scene {
            Scene::Grasp { gripper, objects } => grasp::render(self, Some(*gripper), objects),
            Scene::Racer { car, heading, target } => racer::render(self, Some((*car, *heading)), Some(*target)),
        }
    }

    /// Background-only frame.
    pub fn render_empty(&self) -> Image {
        match self.env_id {
            EnvId::Grasp => grasp::render(self, None, &[]),
            EnvId::Racer => racer::render(self, None, None),
        }
    }
}

/// Poses of everything in the arena.
#[derive(Debug, Clone, PartialEq)]
pub enum Scene {
    Grasp {
        gripper: [f64; 2],
        objects: Vec<TrayObject>,
    },
    Racer {
        car: [f64; 2],
        heading: f64,
        target: [f64; 2],
    },
}

#[derive(Debug, Clone)]
pub struct EnvState {
    pub scene: Scene,
    pub step: usize,
    pub done: bool,
    pub rng: ChaCha8Rng,
}

impl EnvState {
    /// Flat numeric encoding used by checkpoints.
    pub fn to_values(&self) -> Vec<f64> {
        let mut v = vec![self.step as f64, self.done as u8 as f64];
        v.extend(
            rngstate::encode(&self.rng)
                .iter()
                .flat_map(|&w| [(w >> 32) as f64, (w & 0xffff_ffff) as f64]),
        );
        match &self.scene {
            Scene::Grasp { gripper, objects } => {
                v.extend([0.0, gripper[0], gripper[1], objects.len() as f64]);
                for o in objects {
                    v.extend(o.center);
                    v.extend(o.half);
                    v.extend(o.color);
                }
            }
            Scene::Racer { car, heading, target } => v.extend([1.0, car[0], car[1], *heading, target[0], target[1]]),
        }
        v
    }

    pub fn from_values(v: &[f64]) -> Result<Self> {
        let bad = || Error::Checkpoint("malformed environment state".into());
        let header = 2 + 2 * rngstate::WORDS;
        if v.len() < header + 1 {
            return Err(bad());
        }
        let words: Vec<u64> = v[2..header]
            .chunks(2)
            .map(|c| ((c[0] as u64) << 32) | c[1] as u64)
            .collect();
        let rng = rngstate::decode(&words)?;
        let rest = &v[header..];
        let scene = match rest[0] as u8 {
            0 => {
                let n = *rest.get(3).ok_or_else(bad)? as usize;
                if rest.len() != 4 + 7 * n {
                    return Err(bad());
                }
                let objects = rest[4..]
                    .chunks(7)
                    .map(|c| TrayObject {
                        center: [c[0], c[1]],
                        half: [c[2], c[3]],
                        color: [c[4], c[5], c[6]],
                    })
                    .collect();
                Scene::Grasp {
                    gripper: [rest[1], rest[2]],
                    objects,
                }
            }
            1 if rest.len() == 6 => Scene::Racer {
                car: [rest[1], rest[2]],
                heading: rest[3],
                target: [rest[4], rest[5]],
            },
            _ => return Err(bad()),
        };
        Ok(Self {
            scene,
            step: v[0] as usize,
            done: v[1] != 0.0,
            rng,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub success: bool,
    /// grasp: gripper to nearest object edge. racer: car to target centre.
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub obs: Image,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Episodes and seed behind the frozen random-policy baselines below.
pub const BASELINE_EPISODES: usize = 5000;
pub const BASELINE_SEED: u64 = 0;
/// Random-policy mean return on the default racer (stderr about 0.056).
pub const RACER_RANDOM_BASELINE: f64 = -0.4680639382284049;
/// Random-policy success rate on the default grasp task (stderr about 0.0044).
pub const GRASP_RANDOM_BASELINE: f64 = 0.1104;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineStats {
    pub mean: f64,
    pub stderr: f64,
    pub episodes: usize,
}

/// Mean and standard error of episodic return under uniform random actions.
pub fn random_policy_baseline(cfg: &EnvConfig, episodes: usize, seed: u64) -> Result<BaselineStats> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("baseline needs at least one episode".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut returns = Vec::with_capacity(episodes);
    let mut action = vec![0.0; cfg.action_dim];
    for _ in 0..episodes {
        let (mut state, _) = cfg.reset(rng.random());
        let mut total = 0.0;
        while !state.done {
            action.iter_mut().for_each(|a| *a = rng.random_range(-1.0..=1.0));
            total += cfg.step(&mut state, &action)?.reward;
        }
        returns.push(total);
    }
    Ok(summarize(&returns))
}

pub(crate) fn summarize(returns: &[f64]) -> BaselineStats {
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = if returns.len() > 1 {
        returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    BaselineStats {
        mean,
        stderr: (var / n).sqrt(),
        episodes: returns.len(),
    }
}
