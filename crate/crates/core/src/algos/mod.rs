//! Actor-critic agents for continuous control from pixels: soft actor-critic
//! with twin critics, PPO with the clipped surrogate, and the interpolated
//! policy gradient with an optional hindsight-relabeled replay.

mod agent;
pub mod losses;
pub mod nets;
pub mod policy;
mod season;

pub use agent::{stack_batch, ActionChoice, Agent, AgentConfig, Algo, UpdateStats};
pub use losses::{clipped_advantage, mbse_loss, ppo_surrogate, ppo_surrogate_grad, q_target, sac_q_target};
pub use nets::{
    critic_loss, ipg_gradient, ipg_loss, lr_policy_gradient, ppo_actor_loss, sac_actor_loss, Learner, OffPolicyBatch,
    OnPolicyBatch, TrustRegion,
};
pub use policy::{PolicyParams, ReparamSample};
pub use season::{train_season, validate, Experience, Rollout, SeasonStats, SEASON_STEPS, VALIDATION_EPISODES};
