use rand::Rng;
use thiserror::Error;

use crate::sim::{ActionId, FrameStack};

/// One step of experience.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: FrameStack,
    pub action: ActionId,
    pub reward: f64,
    pub next_state: FrameStack,
    /// Collision or goal. Truncated flights are not terminal.
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("replay buffer holds {have} transitions, training needs {need}")]
pub struct NotReady {
    pub have: usize,
    pub need: usize,
}

/// Fixed-capacity FIFO ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: Vec::new(), cursor: 0 }
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

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.cursor };
        self.items[split..].iter().chain(&self.items[..split])
    }

    /// `batch_size` uniform draws with replacement.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        min_fill: usize,
        rng: &mut R,
    ) -> Result<Vec<&Transition>, NotReady> {
        let need = min_fill.max(1);
        if self.items.len() < need {
            return Err(NotReady { have: self.items.len(), need });
        }
        Ok((0..batch_size).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Frame;
    use rand::SeedableRng;

    pub(crate) fn transition(tag: f64) -> Transition {
        let s = FrameStack::init(Frame { size: 1, data: vec![0.0].into() }, 4);
        Transition { state: s.clone(), action: ActionId(0), reward: tag, next_state: s, terminal: false }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(2);
        b.push(transition(1.0));
        assert_eq!(b.len(), 1);
        b.push(transition(2.0));
        b.push(transition(3.0));
        assert_eq!(b.len(), 2);
        let rewards: Vec<f64> = b.iter().map(|t| t.reward).collect();
        assert_eq!(rewards, vec![2.0, 3.0]);
        for i in 0..50 {
            b.push(transition(i as f64));
            assert!(b.len() <= b.capacity());
        }
    }

    #[test]
    fn single_item_fills_batch() {
        let mut b = ReplayBuffer::new(8);
        b.push(transition(7.0));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let batch = b.sample(4, 1, &mut rng).unwrap();
        assert_eq!(batch.len(), 4);
        assert!(batch.iter().all(|t| t.reward == 7.0));
    }

    #[test]
    fn below_threshold_is_not_ready() {
        let mut b = ReplayBuffer::new(8);
        b.push(transition(0.0));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        assert_eq!(b.sample(4, 5, &mut rng).unwrap_err(), NotReady { have: 1, need: 5 });
        assert!(ReplayBuffer::new(3).sample(1, 0, &mut rng).is_err());
    }
}
