use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One stored step. Vectors are flattened state features and raw actor scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    /// Candidates selectable in `state`.
    pub feasible: Vec<bool>,
    /// Candidates selectable in `next_state`.
    pub feasible_next: Vec<bool>,
}

impl Transition {
    pub fn is_finite(&self) -> bool {
        self.reward.is_finite()
            && self
                .state
                .iter()
                .chain(&self.action)
                .chain(&self.next_state)
                .all(|x| x.is_finite())
    }
}

/// Widths fixed by the first stored transition.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dims {
    state: usize,
    action: usize,
    feasible: usize,
}

/// Fixed-capacity ring buffer; the oldest transition is overwritten first.
///
/// Fields are stored in flat per-field arrays rather than one allocation per
/// transition, which keeps long-running training from fragmenting the heap.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    len: usize,
    next: usize,
    dims: Option<Dims>,
    states: Vec<f64>,
    actions: Vec<f64>,
    next_states: Vec<f64>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    feasible: Vec<bool>,
    feasible_next: Vec<bool>,
    rng: ChaCha8Rng,
}

fn put<T: Copy>(store: &mut Vec<T>, slot: usize, values: &[T]) {
    let start = slot * values.len();
    if start == store.len() {
        store.extend_from_slice(values);
    } else {
        store[start..start + values.len()].copy_from_slice(values);
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize, rng_seed: u64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            len: 0,
            next: 0,
            dims: None,
            states: Vec::new(),
            actions: Vec::new(),
            next_states: Vec::new(),
            rewards: Vec::new(),
            dones: Vec::new(),
            feasible: Vec::new(),
            feasible_next: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::Argument("transition contains non-finite values".into()));
        }
        let dims = Dims {
            state: t.state.len(),
            action: t.action.len(),
            feasible: t.feasible.len(),
        };
        let expected = *self.dims.get_or_insert(dims);
        if dims != expected || t.next_state.len() != dims.state || t.feasible_next.len() != dims.feasible {
            return Err(Error::Dimension {
                what: "replayed transition",
                expected: 2 * expected.state + expected.action + 2 * expected.feasible,
                actual: t.state.len() + t.next_state.len() + t.action.len() + t.feasible.len() + t.feasible_next.len(),
            });
        }
        let slot = self.next;
        put(&mut self.states, slot, &t.state);
        put(&mut self.actions, slot, &t.action);
        put(&mut self.next_states, slot, &t.next_state);
        put(&mut self.rewards, slot, &[t.reward]);
        put(&mut self.dones, slot, &[t.done]);
        put(&mut self.feasible, slot, &t.feasible);
        put(&mut self.feasible_next, slot, &t.feasible_next);
        self.len = (self.len + 1).min(self.capacity);
        self.next = (self.next + 1) % self.capacity;
        Ok(())
    }

    fn get(&self, i: usize) -> Transition {
        let d = self.dims.expect("non-empty buffer has dimensions");
        let row = |v: &[f64], w: usize| v[i * w..(i + 1) * w].to_vec();
        let flags = |v: &[bool], w: usize| v[i * w..(i + 1) * w].to_vec();
        Transition {
            state: row(&self.states, d.state),
            action: row(&self.actions, d.action),
            reward: self.rewards[i],
            next_state: row(&self.next_states, d.state),
            done: self.dones[i],
            feasible: flags(&self.feasible, d.feasible),
            feasible_next: flags(&self.feasible_next, d.feasible),
        }
    }

    /// Uniform sample of `n` distinct transitions.
    pub fn sample(&mut self, n: usize) -> Result<Vec<Transition>> {
        if n > self.len {
            return Err(Error::Argument(format!(
                "cannot sample {n} transitions from a buffer of {}",
                self.len
            )));
        }
        let picks = rand::seq::index::sample(&mut self.rng, self.len, n);
        Ok(picks.iter().map(|i| self.get(i)).collect())
    }
}
