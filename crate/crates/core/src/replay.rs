//! Ring-buffer experience replay and its two-way branch partition.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::numcore::Matrix;
use crate::sac::SacBatch;

/// Evaluative pathway a state is assigned to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    /// Regular (go) pathway.
    R,
    /// Inhibitory (stop) pathway.
    I,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::R, Branch::I];
}

/// One environment step as stored in replay.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub branch: Branch,
    /// Reward of the transition's own branch.
    pub reward: f64,
    /// Unshaped environment reward, used by the inhibitory policy.
    pub reward_raw: f64,
    /// Squashed action of the inhibitory policy at this state (0 when unused).
    pub inhibitor_action: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// A sampled mini-batch plus the auxiliary columns.
#[derive(Clone, Debug)]
pub struct SampledBatch {
    pub batch: SacBatch,
    pub raw_rewards: Vec<f64>,
    pub inhibitor_actions: Matrix,
    pub branches: Vec<Branch>,
    pub indices: Vec<usize>,
}

/// Fixed-capacity FIFO replay stored column-wise. The oldest entry is
/// overwritten once full.
#[derive(Clone, Debug)]
pub struct RingBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    len: usize,
    cursor: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    raw_rewards: Vec<f64>,
    inhibitor_actions: Vec<f64>,
    next_states: Vec<f64>,
    dones: Vec<f64>,
    branches: Vec<Branch>,
}

impl RingBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Result<Self> {
        if capacity == 0 || obs_dim == 0 || act_dim == 0 {
            return Err(Error::Config(
                "replay capacity and dimensions must be positive".into(),
            ));
        }
        Ok(Self {
            capacity,
            obs_dim,
            act_dim,
            len: 0,
            cursor: 0,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            raw_rewards: Vec::new(),
            inhibitor_actions: Vec::new(),
            next_states: Vec::new(),
            dones: Vec::new(),
            branches: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: &Transition) -> Result<()> {
        if t.state.len() != self.obs_dim || t.next_state.len() != self.obs_dim || t.action.len() != self.act_dim {
            return Err(shape_err(format!(
                "transition dims ({}, {}, {}) do not match buffer ({}, {})",
                t.state.len(),
                t.action.len(),
                t.next_state.len(),
                self.obs_dim,
                self.act_dim
            )));
        }
        let done = if t.done { 1.0 } else { 0.0 };
        if self.len < self.capacity {
            self.states.extend_from_slice(&t.state);
            self.actions.extend_from_slice(&t.action);
            self.next_states.extend_from_slice(&t.next_state);
            self.rewards.push(t.reward);
            self.raw_rewards.push(t.reward_raw);
            self.inhibitor_actions.push(t.inhibitor_action);
            self.dones.push(done);
            self.branches.push(t.branch);
            self.len += 1;
        } else {
            let i = self.cursor;
            let (o, a) = (self.obs_dim, self.act_dim);
            self.states[i * o..(i + 1) * o].copy_from_slice(&t.state);
            self.next_states[i * o..(i + 1) * o].copy_from_slice(&t.next_state);
            self.actions[i * a..(i + 1) * a].copy_from_slice(&t.action);
            self.rewards[i] = t.reward;
            self.raw_rewards[i] = t.reward_raw;
            self.inhibitor_actions[i] = t.inhibitor_action;
            self.dones[i] = done;
            self.branches[i] = t.branch;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    /// Storage slot `i` (not chronological once the buffer has wrapped).
    pub fn get(&self, i: usize) -> Option<Transition> {
        if i >= self.len {
            return None;
        }
        let (o, a) = (self.obs_dim, self.act_dim);
        Some(Transition {
            state: self.states[i * o..(i + 1) * o].to_vec(),
            action: self.actions[i * a..(i + 1) * a].to_vec(),
            branch: self.branches[i],
            reward: self.rewards[i],
            reward_raw: self.raw_rewards[i],
            inhibitor_action: self.inhibitor_actions[i],
            next_state: self.next_states[i * o..(i + 1) * o].to_vec(),
            done: self.dones[i] != 0.0,
        })
    }

    pub fn branch_at(&self, i: usize) -> Option<Branch> {
        self.branches.get(i).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = Transition> + '_ {
        (0..self.len).filter_map(|i| self.get(i))
    }

    /// `count` slots drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<usize> {
        (0..count).map(|_| rng.gen_range(0..self.len)).collect()
    }

    pub fn gather(&self, indices: &[usize]) -> Result<SampledBatch> {
        let (o, a) = (self.obs_dim, self.act_dim);
        let n = indices.len();
        let mut states = Vec::with_capacity(n * o);
        let mut next_states = Vec::with_capacity(n * o);
        let mut actions = Vec::with_capacity(n * a);
        let mut rewards = Vec::with_capacity(n);
        let mut raw = Vec::with_capacity(n);
        let mut aux = Vec::with_capacity(n);
        let mut dones = Vec::with_capacity(n);
        let mut branches = Vec::with_capacity(n);
        for &i in indices {
            if i >= self.len {
                return Err(Error::Usage(format!("replay slot {i} is empty")));
            }
            states.extend_from_slice(&self.states[i * o..(i + 1) * o]);
            next_states.extend_from_slice(&self.next_states[i * o..(i + 1) * o]);
            actions.extend_from_slice(&self.actions[i * a..(i + 1) * a]);
            rewards.push(self.rewards[i]);
            raw.push(self.raw_rewards[i]);
            aux.push(self.inhibitor_actions[i]);
            dones.push(self.dones[i]);
            branches.push(self.branches[i]);
        }
        Ok(SampledBatch {
            batch: SacBatch {
                states: Matrix::from_vec(n, o, states)?,
                actions: Matrix::from_vec(n, a, actions)?,
                rewards,
                next_states: Matrix::from_vec(n, o, next_states)?,
                dones,
            },
            raw_rewards: raw,
            inhibitor_actions: Matrix::from_vec(n, 1, aux)?,
            branches,
            indices: indices.to_vec(),
        })
    }

    /// A uniform batch of `batch_size`, or `None` while the fill is below it.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Option<SampledBatch>> {
        if batch_size == 0 {
            return Err(Error::Usage("batch size must be at least 1".into()));
        }
        if self.len < batch_size {
            return Ok(None);
        }
        let idx = self.sample_indices(batch_size, rng);
        self.gather(&idx).map(Some)
    }
}

/// Branch-partitioned replay `{D_R, D_I}`.
#[derive(Clone, Debug)]
pub struct ReplayPartition {
    pub regular: RingBuffer,
    pub inhibitory: RingBuffer,
}

/// Per-branch batches; a branch whose buffer is underfilled yields `None`.
#[derive(Clone, Debug, Default)]
pub struct BranchBatches {
    pub regular: Option<SampledBatch>,
    pub inhibitory: Option<SampledBatch>,
}

impl BranchBatches {
    pub fn is_empty(&self) -> bool {
        self.regular.is_none() && self.inhibitory.is_none()
    }

    pub fn get(&self, branch: Branch) -> Option<&SampledBatch> {
        match branch {
            Branch::R => self.regular.as_ref(),
            Branch::I => self.inhibitory.as_ref(),
        }
    }
}

impl ReplayPartition {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Result<Self> {
        Ok(Self {
            regular: RingBuffer::new(capacity, obs_dim, act_dim)?,
            inhibitory: RingBuffer::new(capacity, obs_dim, act_dim)?,
        })
    }

    pub fn buffer(&self, branch: Branch) -> &RingBuffer {
        match branch {
            Branch::R => &self.regular,
            Branch::I => &self.inhibitory,
        }
    }

    /// Appends to the buffer matching the transition's branch only.
    pub fn push(&mut self, t: &Transition) -> Result<()> {
        match t.branch {
            Branch::R => self.regular.push(t),
            Branch::I => self.inhibitory.push(t),
        }
    }

    /// Draws the regular batch first, then the inhibitory one.
    pub fn sample_batches<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<BranchBatches> {
        Ok(BranchBatches {
            regular: self.regular.sample(batch_size, rng)?,
            inhibitory: self.inhibitory.sample(batch_size, rng)?,
        })
    }

    pub fn fills(&self) -> (usize, usize) {
        (self.regular.len(), self.inhibitory.len())
    }
}
