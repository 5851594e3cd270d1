use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// One step of experience `(s_t, a_t, r_{t+1}, s_{t+1}, done)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// A uniformly sampled minibatch, one transition per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    /// `1.0` for terminal transitions, `0.0` otherwise.
    pub dones: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn from_transitions(items: &[Transition]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::Usage("empty batch".into()))?;
        let (sd, ad) = (first.state.len(), first.action.len());
        let n = items.len();
        let mut b = Batch {
            states: Array2::zeros((n, sd)),
            actions: Array2::zeros((n, ad)),
            rewards: Array1::zeros(n),
            next_states: Array2::zeros((n, sd)),
            dones: Array1::zeros(n),
        };
        for (i, tr) in items.iter().enumerate() {
            if tr.state.len() != sd || tr.next_state.len() != sd || tr.action.len() != ad {
                return Err(Error::shape(format!("state {sd}, action {ad}"), "ragged transitions"));
            }
            b.states.row_mut(i).assign(&Array1::from_vec(tr.state.clone()));
            b.actions.row_mut(i).assign(&Array1::from_vec(tr.action.clone()));
            b.next_states.row_mut(i).assign(&Array1::from_vec(tr.next_state.clone()));
            b.rewards[i] = tr.reward;
            b.dones[i] = if tr.done { 1.0 } else { 0.0 };
        }
        Ok(b)
    }
}

/// Fixed-capacity ring of transitions; the oldest entry is overwritten once
/// full. Storage grows lazily up to the capacity.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    state_dim: usize,
    action_dim: usize,
    capacity: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    dones: Vec<bool>,
    cursor: usize,
    inserted: u64,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(state_dim: usize, action_dim: usize, capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            state_dim,
            action_dim,
            capacity,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            dones: Vec::new(),
            cursor: 0,
            inserted: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total transitions ever pushed.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, tr: Transition) -> Result<()> {
        if tr.state.len() != self.state_dim || tr.next_state.len() != self.state_dim {
            return Err(Error::shape(self.state_dim, tr.state.len()));
        }
        if tr.action.len() != self.action_dim {
            return Err(Error::shape(self.action_dim, tr.action.len()));
        }
        if !tr.reward.is_finite() {
            return Err(Error::NonFinite("transition reward".into()));
        }
        if self.len() < self.capacity {
            self.states.extend_from_slice(&tr.state);
            self.actions.extend_from_slice(&tr.action);
            self.rewards.push(tr.reward);
            self.next_states.extend_from_slice(&tr.next_state);
            self.dones.push(tr.done);
        } else {
            let i = self.cursor;
            let (sd, ad) = (self.state_dim, self.action_dim);
            self.states[i * sd..(i + 1) * sd].copy_from_slice(&tr.state);
            self.actions[i * ad..(i + 1) * ad].copy_from_slice(&tr.action);
            self.rewards[i] = tr.reward;
            self.next_states[i * sd..(i + 1) * sd].copy_from_slice(&tr.next_state);
            self.dones[i] = tr.done;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        self.inserted += 1;
        Ok(())
    }

    /// Transition in storage slot `i`.
    pub fn get(&self, i: usize) -> Option<Transition> {
        if i >= self.len() {
            return None;
        }
        let (sd, ad) = (self.state_dim, self.action_dim);
        Some(Transition {
            state: self.states[i * sd..(i + 1) * sd].to_vec(),
            action: self.actions[i * ad..(i + 1) * ad].to_vec(),
            reward: self.rewards[i],
            next_state: self.next_states[i * sd..(i + 1) * sd].to_vec(),
            done: self.dones[i],
        })
    }

    /// Stored transitions from oldest to newest.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = Transition> + '_ {
        let start = if self.len() < self.capacity { 0 } else { self.cursor };
        (0..self.len()).filter_map(move |k| self.get((start + k) % self.len()))
    }

    /// Uniform sample with replacement.
    pub fn sample(&mut self, batch_size: usize) -> Result<Batch> {
        if batch_size == 0 || batch_size > self.len() {
            return Err(Error::Usage(format!(
                "cannot sample {batch_size} transitions from a buffer holding {}",
                self.len()
            )));
        }
        let (sd, ad) = (self.state_dim, self.action_dim);
        let mut b = Batch {
            states: Array2::zeros((batch_size, sd)),
            actions: Array2::zeros((batch_size, ad)),
            rewards: Array1::zeros(batch_size),
            next_states: Array2::zeros((batch_size, sd)),
            dones: Array1::zeros(batch_size),
        };
        for row in 0..batch_size {
            let i = self.rng.random_range(0..self.len());
            for k in 0..sd {
                b.states[[row, k]] = self.states[i * sd + k];
                b.next_states[[row, k]] = self.next_states[i * sd + k];
            }
            for k in 0..ad {
                b.actions[[row, k]] = self.actions[i * ad + k];
            }
            b.rewards[row] = self.rewards[i];
            b.dones[row] = if self.dones[i] { 1.0 } else { 0.0 };
        }
        Ok(b)
    }
}
