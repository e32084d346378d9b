//! Experience storage: the off-policy replay ring, the on-policy trajectory
//! buffer, generalized advantage estimation and hindsight relabeling.

mod gae;
mod her;
mod replay;

use std::sync::Arc;

pub use gae::{gae, gae_returns};
pub use her::{
    goal_distance, goal_distance_images, her_relabel, hindsight_reward, FeatureFn, HerConfig, HerStrategy, SuccessPool,
};
pub use replay::{OnPolicyStep, ReplayBuffer, TrajectoryBuffer, REPLAY_CAPACITY, TRAJECTORY_CAPACITY};

use crate::featnet::ObservationStack;
use crate::image::Image;

/// One environment step, optionally with a hindsight goal.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: ObservationStack,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: ObservationStack,
    pub done: bool,
    /// Hindsight goal frame.
    pub goal: Option<Arc<Image>>,
    /// Indicator reward for `goal`, present exactly when `goal` is.
    pub hindsight_reward: Option<f64>,
}

impl Transition {
    pub fn new(s: ObservationStack, a: Vec<f64>, r: f64, s_next: ObservationStack, done: bool) -> Self {
        Self {
            s,
            a,
            r,
            s_next,
            done,
            goal: None,
            hindsight_reward: None,
        }
    }

    /// Reward used for learning: the hindsight reward when relabeled.
    pub fn learning_reward(&self) -> f64 {
        self.hindsight_reward.unwrap_or(self.r)
    }

    pub fn is_relabeled(&self) -> bool {
        self.goal.is_some()
    }
}
