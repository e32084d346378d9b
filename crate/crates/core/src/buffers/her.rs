use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::Transition;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::netlib::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HerStrategy {
    /// Goals drawn from previously reached successful states.
    Success,
    /// The episode's last next-state.
    Final,
    /// A later next-state of the same episode.
    Future,
}

impl HerStrategy {
    pub fn name(self) -> &'static str {
        match self {
            HerStrategy::Success => "success",
            HerStrategy::Final => "final",
            HerStrategy::Future => "future",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "success" => Some(HerStrategy::Success),
            "final" => Some(HerStrategy::Final),
            "future" => Some(HerStrategy::Future),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HerConfig {
    pub strategy: HerStrategy,
    /// Compare goals in feature space instead of pixel space.
    pub use_features: bool,
    pub threshold: f64,
    pub success_pool_capacity: usize,
}

impl HerConfig {
    pub fn new(strategy: HerStrategy) -> Self {
        Self {
            strategy,
            use_features: false,
            threshold: 0.3,
            success_pool_capacity: 500,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "HER threshold must be positive, got {}",
                self.threshold
            )));
        }
        if self.success_pool_capacity == 0 {
            return Err(Error::InvalidArgument("success pool capacity must be positive".into()));
        }
        Ok(())
    }
}

/// Most recent successful next-state frames, FIFO.
#[derive(Debug, Clone, Default)]
pub struct SuccessPool {
    frames: VecDeque<Arc<Image>>,
    capacity: usize,
}

impl SuccessPool {
    pub fn new(capacity: usize) -> Self {
        Self {
            frames: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, frame: Arc<Image>) {
        if self.capacity == 0 {
            return;
        }
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<Image>> {
        self.frames.iter()
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Option<Arc<Image>> {
        if self.frames.is_empty() {
            return None;
        }
        Some(self.frames[rng.random_range(0..self.frames.len())].clone())
    }
}

/// Root-mean-square difference `‖x − y‖₂ / √n`.
pub fn goal_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::shape(format!(
            "goal distance between {} and {} values",
            x.len(),
            y.len()
        )));
    }
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / x.len() as f64).sqrt())
}

pub fn goal_distance_images(x: &Image, y: &Image) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::shape(format!("goal images {:?} and {:?}", x.shape(), y.shape())));
    }
    let ss: f64 = x
        .raw()
        .iter()
        .zip(y.raw())
        .map(|(&a, &b)| {
            let d = (a as f64 - b as f64) / 255.0;
            d * d
        })
        .sum();
    Ok((ss / x.raw().len() as f64).sqrt())
}

/// 1 when the goal is within `h`, else 0.
pub fn hindsight_reward(distance: f64, h: f64) -> f64 {
    if distance < h {
        1.0
    } else {
        0.0
    }
}

/// Maps a goal-sized frame to its feature vector.
pub type FeatureFn<'a> = dyn Fn(&Image) -> Result<Tensor> + 'a;

/// Relabels every transition of a finished episode with a hindsight goal and
/// its indicator reward. The input is left untouched.
pub fn her_relabel(
    episode: &[Transition],
    cfg: &HerConfig,
    pool: &SuccessPool,
    feature_fn: Option<&FeatureFn<'_>>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Transition>> {
    cfg.validate()?;
    let n = episode.len();
    if n == 0 {
        return Err(Error::InvalidArgument("cannot relabel an empty episode".into()));
    }
    let features = match (cfg.use_features, feature_fn) {
        (true, Some(f)) => Some(f),
        (true, None) => {
            return Err(Error::InvalidArgument(
                "feature-distance relabeling needs a feature function".into(),
            ))
        }
        (false, _) => None,
    };
    let achieved: Vec<&Arc<Image>> = episode.iter().map(|t| t.s_next.newest()).collect();
    let achieved_features = match features {
        Some(f) => Some(achieved.iter().map(|img| f(img)).collect::<Result<Vec<_>>>()?),
        None => None,
    };
    let use_pool = cfg.strategy == HerStrategy::Success && !pool.is_empty();

    let mut out = Vec::with_capacity(n);
    for (i, t) in episode.iter().enumerate() {
        // `goal_index` is Some when the goal comes from this episode.
        let (goal, goal_index) = match cfg.strategy {
            HerStrategy::Success if use_pool => (pool.draw(rng).expect("pool is non-empty"), None),
            HerStrategy::Future if i + 1 < n => {
                let k = rng.random_range(i + 1..n);
                (achieved[k].clone(), Some(k))
            }
            _ => (achieved[n - 1].clone(), Some(n - 1)),
        };
        let distance = match (features, &achieved_features) {
            (Some(f), Some(cache)) => {
                let g = match goal_index {
                    Some(k) => cache[k].clone(),
                    None => f(&goal)?,
                };
                goal_distance(g.data(), cache[i].data())?
            }
            _ => goal_distance_images(&goal, achieved[i])?,
        };
        let mut relabeled = t.clone();
        relabeled.goal = Some(goal);
        relabeled.hindsight_reward = Some(hindsight_reward(distance, cfg.threshold));
        out.push(relabeled);
    }
    Ok(out)
}
