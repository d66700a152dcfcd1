use rand::Rng;

use crate::error::{Error, Result};
use crate::replay::{Branch, BranchBatches, ReplayPartition, RingBuffer, SampledBatch, Transition};

/// Replay layout: one buffer per branch (episodic memory) or a single shared
/// buffer whose samples are split by their stored labels.
#[derive(Clone, Debug)]
pub enum Memory {
    Partitioned(ReplayPartition),
    Shared(RingBuffer),
}

impl Memory {
    pub fn new(episodic: bool, capacity: usize, obs_dim: usize, act_dim: usize) -> Result<Self> {
        Ok(if episodic {
            Memory::Partitioned(ReplayPartition::new(capacity, obs_dim, act_dim)?)
        } else {
            Memory::Shared(RingBuffer::new(capacity, obs_dim, act_dim)?)
        })
    }

    pub fn push(&mut self, t: &Transition) -> Result<()> {
        match self {
            Memory::Partitioned(p) => p.push(t),
            Memory::Shared(b) => b.push(t),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Memory::Partitioned(p) => p.regular.len() + p.inhibitory.len(),
            Memory::Shared(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stored transitions per branch `(R, I)`.
    pub fn fills(&self) -> (usize, usize) {
        match self {
            Memory::Partitioned(p) => p.fills(),
            Memory::Shared(b) => {
                let i = (0..b.len()).filter(|&k| b.branch_at(k) == Some(Branch::I)).count();
                (b.len() - i, i)
            }
        }
    }

    /// Batches for the per-branch updates. Partitioned: a full batch from
    /// every buffer holding at least `batch_size`. Shared: one batch of
    /// `batch_size`, split by label.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<BranchBatches> {
        match self {
            Memory::Partitioned(p) => p.sample_batches(batch_size, rng),
            Memory::Shared(b) => {
                if batch_size == 0 {
                    return Err(Error::Usage("batch size must be at least 1".into()));
                }
                if b.len() < batch_size {
                    return Ok(BranchBatches::default());
                }
                let idx = b.sample_indices(batch_size, rng);
                let (ir, ii): (Vec<usize>, Vec<usize>) =
                    idx.iter().partition(|&&k| b.branch_at(k) == Some(Branch::R));
                let gather = |v: Vec<usize>| if v.is_empty() { Ok(None) } else { b.gather(&v).map(Some) };
                Ok(BranchBatches {
                    regular: gather(ir)?,
                    inhibitory: gather(ii)?,
                })
            }
        }
    }

    /// One batch over all stored transitions, drawn the way the main learner
    /// draws (both partitions concatenated, or the shared buffer).
    pub fn sample_joint<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Option<SampledBatch>> {
        match self {
            Memory::Shared(b) => b.sample(batch_size, rng),
            Memory::Partitioned(p) => {
                let bb = p.sample_batches(batch_size, rng)?;
                Ok(match (bb.regular, bb.inhibitory) {
                    (Some(r), Some(i)) => Some(concat_sampled(r, i)?),
                    (Some(x), None) | (None, Some(x)) => Some(x),
                    (None, None) => None,
                })
            }
        }
    }
}

fn concat_sampled(a: SampledBatch, b: SampledBatch) -> Result<SampledBatch> {
    let mut out = a;
    out.batch = out.batch.concat(&b.batch)?;
    out.raw_rewards.extend(b.raw_rewards);
    out.inhibitor_actions = out.inhibitor_actions.vcat(&b.inhibitor_actions)?;
    out.branches.extend(b.branches);
    out.indices.extend(b.indices);
    Ok(out)
}
