//! Uniform-replay ring buffer of joint transitions.

use rand::Rng;

/// One POSG step: joint observation, joint action indices, per-agent
/// rewards, next joint observation, terminal flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<Vec<f64>>,
    pub done: bool,
}

/// Ring storage; once full, the oldest entries are overwritten in insertion
/// order. Sampling is uniform with replacement.
pub struct ReplayBuffer {
    storage: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer needs capacity");
        ReplayBuffer { storage: Vec::with_capacity(capacity.min(1 << 20)), capacity, cursor: 0 }
    }

    pub fn push(&mut self, t: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.storage[i]
    }

    pub fn sample_indices(&self, batch: usize, rng: &mut impl Rng) -> Vec<usize> {
        (0..batch).map(|_| rng.random_range(0..self.storage.len())).collect()
    }
}
