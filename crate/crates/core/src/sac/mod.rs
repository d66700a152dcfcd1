//! Soft actor-critic: tanh-squashed Gaussian policy, clipped twin critics and
//! automatic temperature tuning.

mod agent;
mod critic;
mod policy;
mod temperature;

pub use agent::{SacAgent, SacConfig, SacMetrics};
pub(crate) use agent::{critic_step, policy_update, soft_update_targets, CriticStep, PolicyTerm};
pub use critic::{
    policy_loss, q_loss, q_loss_with_targets, target_value, td_targets, PolicyLoss, QLoss, TwinQ,
};
pub(crate) use critic::policy_term;
pub use policy::{GaussianPolicy, PolicySample, LOG_STD_MAX, LOG_STD_MIN, SQUASH_EPS};
pub use temperature::{alpha_loss, Temperature};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{shape_err, Result};
use crate::numcore::Matrix;

/// Mini-batch of transitions for one critic/policy update.
#[derive(Clone, Debug, PartialEq)]
pub struct SacBatch {
    pub states: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_states: Matrix,
    /// 1.0 for terminal transitions, 0.0 otherwise.
    pub dones: Vec<f64>,
}

impl SacBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.len();
        if self.states.rows() != b
            || self.actions.rows() != b
            || self.next_states.rows() != b
            || self.dones.len() != b
            || self.states.cols() != self.next_states.cols()
        {
            return Err(shape_err("batch fields disagree on size"));
        }
        if self.dones.iter().any(|&d| d != 0.0 && d != 1.0) {
            return Err(shape_err("done flags must be 0 or 1"));
        }
        Ok(())
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &SacBatch) -> Result<SacBatch> {
        let mut rewards = self.rewards.clone();
        rewards.extend_from_slice(&other.rewards);
        let mut dones = self.dones.clone();
        dones.extend_from_slice(&other.dones);
        Ok(SacBatch {
            states: self.states.vcat(&other.states)?,
            actions: self.actions.vcat(&other.actions)?,
            rewards,
            next_states: self.next_states.vcat(&other.next_states)?,
            dones,
        })
    }
}

/// Standard-normal matrix drawn row by row.
pub fn normal_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).expect("sampled normals are finite")
}
