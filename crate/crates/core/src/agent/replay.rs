use rand::seq::index;

use super::state::StateVec;
use crate::error::{Error, Result};
use crate::hybrid::CommMode;
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: StateVec,
    pub action: CommMode,
    pub reward: f64,
    pub next_state: StateVec,
    /// The send that completed the game.
    pub terminal: bool,
}

/// Bounded ring of transitions; once full each insert evicts the oldest.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::new(),
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = if self.items.len() < self.capacity {
            (&self.items[..], &self.items[..0])
        } else {
            let (a, b) = self.items.split_at(self.cursor);
            (a, b)
        };
        older.iter().chain(newer)
    }

    /// Indices of `n` distinct stored transitions, uniformly at random.
    pub fn sample_indices(&self, n: usize, rng: &mut SimRng) -> Result<Vec<usize>> {
        if n > self.items.len() {
            return Err(Error::Input(format!(
                "cannot sample {n} transitions from {}",
                self.items.len()
            )));
        }
        Ok(index::sample(rng, self.items.len(), n).into_vec())
    }

    pub fn sample(&self, n: usize, rng: &mut SimRng) -> Result<Vec<&Transition>> {
        Ok(self
            .sample_indices(n, rng)?
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }

    pub fn get(&self, slot: usize) -> Option<&Transition> {
        self.items.get(slot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn t(r: f64) -> Transition {
        Transition {
            state: StateVec::default(),
            action: CommMode::SingleItsG5,
            reward: r,
            next_state: StateVec::default(),
            terminal: false,
        }
    }

    #[test]
    fn ring_keeps_last_entries_in_order() {
        let mut b = ReplayBuffer::new(3);
        for r in 0..4 {
            b.push(t(r as f64));
        }
        let rs: Vec<f64> = b.iter().map(|x| x.reward).collect();
        assert_eq!(rs, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn size_grows_until_capacity() {
        let mut b = ReplayBuffer::new(10);
        for k in 1..=7 {
            b.push(t(0.0));
            assert_eq!(b.len(), k);
        }
    }

    #[test]
    fn samples_are_distinct_members() {
        let mut b = ReplayBuffer::new(50);
        for r in 0..80 {
            b.push(t(r as f64));
        }
        let mut rng = stream_rng(1, 0);
        let s = b.sample(20, &mut rng).unwrap();
        let mut rewards: Vec<i64> = s.iter().map(|x| x.reward as i64).collect();
        assert!(rewards.iter().all(|r| (30..80).contains(r)));
        rewards.sort();
        rewards.dedup();
        assert_eq!(rewards.len(), 20);
        assert!(b.sample(51, &mut rng).is_err());
    }
}
