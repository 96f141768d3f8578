//! Replay memory: fixed-capacity storage of the most recent transitions,
//! overwriting oldest-first once full, with uniform with-replacement
//! minibatch sampling. Sampling clones value snapshots, so later pushes
//! never alter a batch already handed out.

use crate::error::{Error, Result};
use crate::preprocess::PhiState;
use rand::Rng;

/// Replay capacity used with the full-scale profile.
pub const FULL_SCALE_CAPACITY: usize = 1_000_000;

/// One stored experience: the stacked observation before the action, the
/// action, the (possibly clipped) reward, the observation after, and whether
/// the episode ended there.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub phi_before: PhiState,
    pub action: usize,
    pub reward: f64,
    pub phi_after: PhiState,
    pub terminal: bool,
}

/// Ring buffer of the last `capacity` items.
#[derive(Debug, Clone)]
pub struct ReplayMemory<T> {
    capacity: usize,
    storage: Vec<T>,
    cursor: usize,
}

impl<T: Clone> ReplayMemory<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be at least 1".into()));
        }
        Ok(ReplayMemory {
            capacity,
            storage: Vec::new(),
            cursor: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Stores an item, evicting exactly the oldest once the memory is full.
    /// Never fails.
    pub fn push(&mut self, item: T) {
        if self.storage.len() < self.capacity {
            self.storage.push(item);
        } else {
            self.storage[self.cursor] = item;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
    }

    /// Stored items, oldest first.
    pub fn iter_in_order(&self) -> impl Iterator<Item = &T> {
        let (newer, older) = self.storage.split_at(self.cursor);
        older.iter().chain(newer.iter())
    }

    /// Draws `batch_size` items uniformly at random with replacement.
    pub fn sample<R: Rng>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<T>> {
        if self.storage.is_empty() {
            return Err(Error::State("cannot sample from an empty replay memory".into()));
        }
        if batch_size == 0 {
            return Err(Error::Input("batch size must be at least 1".into()));
        }
        Ok((0..batch_size)
            .map(|_| self.storage[rng.gen_range(0..self.storage.len())].clone())
            .collect())
    }
}
