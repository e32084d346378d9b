use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Transition;
use crate::error::{Error, Result};

pub const REPLAY_CAPACITY: usize = 20_000;
pub const TRAJECTORY_CAPACITY: usize = 1024;

/// Fixed-capacity FIFO ring with its own sampling stream.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    /// Next slot to overwrite once full.
    cursor: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("replay capacity must be positive".into()));
        }
        Ok(Self {
            items: Vec::new(),
            capacity,
            cursor: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn append(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
    }

    /// Stored transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.items.split_at(self.cursor);
        older.iter().chain(newer)
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// `n` distinct slot indices drawn uniformly from the internal stream.
    pub fn sample_indices(&mut self, n: usize) -> Result<Vec<usize>> {
        if n > self.items.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot sample {n} transitions from a buffer of {}",
                self.items.len()
            )));
        }
        Ok(index::sample(&mut self.rng, self.items.len(), n).into_vec())
    }

    pub fn sample_minibatch(&mut self, n: usize) -> Result<Vec<&Transition>> {
        let idx = self.sample_indices(n)?;
        Ok(idx.into_iter().map(|i| &self.items[i]).collect())
    }

    pub(crate) fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    /// Rebuilds a buffer from its oldest-first contents and sampling stream.
    pub(crate) fn restore(capacity: usize, items: Vec<Transition>, rng: ChaCha8Rng) -> Result<Self> {
        if items.len() > capacity || capacity == 0 {
            return Err(Error::Checkpoint("replay contents exceed capacity".into()));
        }
        Ok(Self {
            items,
            capacity,
            cursor: 0,
            rng,
        })
    }
}

/// An on-policy step with the quantities frozen at collection time.
#[derive(Debug, Clone, PartialEq)]
pub struct OnPolicyStep {
    pub transition: Transition,
    /// Pre-squash Gaussian sample.
    pub pre_tanh: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
}

/// One season of on-policy experience.
#[derive(Debug, Clone)]
pub struct TrajectoryBuffer {
    steps: Vec<OnPolicyStep>,
    capacity: usize,
    /// Value of the state following the last step.
    pub bootstrap_value: f64,
}

impl TrajectoryBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            steps: Vec::with_capacity(capacity),
            capacity,
            bootstrap_value: 0.0,
        }
    }

    pub fn push(&mut self, step: OnPolicyStep) -> Result<()> {
        if self.steps.len() >= self.capacity {
            return Err(Error::Usage(format!(
                "trajectory buffer full at {} steps",
                self.capacity
            )));
        }
        self.steps.push(step);
        Ok(())
    }

    pub fn steps(&self) -> &[OnPolicyStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.steps.len() == self.capacity
    }

    pub fn clear(&mut self) {
        self.steps.clear();
        self.bootstrap_value = 0.0;
    }

    /// GAE advantages and value targets over the stored steps.
    pub fn advantages(&self, gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let rewards: Vec<f64> = self.steps.iter().map(|s| s.transition.r).collect();
        let dones: Vec<bool> = self.steps.iter().map(|s| s.transition.done).collect();
        let mut values: Vec<f64> = self.steps.iter().map(|s| s.value).collect();
        values.push(self.bootstrap_value);
        super::gae_returns(&rewards, &values, &dones, gamma, lambda)
    }
}
