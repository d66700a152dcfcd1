//! SAC with inhibitory networks: branch-partitioned replay, per-branch twin
//! critics and temperatures, a composite policy loss and optional learned
//! inhibitory policies.

mod agent;
mod inhibitory;
mod memory;

pub use agent::{saci_update_step, SaciAgent, SaciConfig, SaciMetrics};
pub use inhibitory::{
    classify_state, inhibitory_policy_update, modulated_inhibitory_reward, modulator_weight, switch_branch,
    weight_from_action, Classification, InhibitorMode, InhibitoryPolicy,
};
pub use memory::Memory;

pub use crate::envs::InhibitionRule;
pub use crate::replay::{Branch, BranchBatches, ReplayPartition, Transition};

use crate::error::{Error, Result};
use crate::numcore::{Matrix, MlpGrads};
use crate::sac::{alpha_loss, policy_term, q_loss, GaussianPolicy, QLoss, SacBatch, Temperature, TwinQ};

/// Branch critic loss: the soft Bellman residual on branch-`k` data, with
/// branch-`k` targets and temperature in the bootstrap.
pub fn q_loss_branch(
    twin_k: &TwinQ,
    batch_k: &SacBatch,
    policy: &GaussianPolicy,
    alpha_k: f64,
    gamma: f64,
    noise: &Matrix,
) -> Result<QLoss> {
    q_loss(twin_k, batch_k, policy, alpha_k, gamma, noise)
}

/// Per-branch temperature loss and gradient; `None` for an empty branch.
pub fn dual_alpha_loss(temp_k: &Temperature, log_probs_k: &[f64]) -> Option<(f64, f64)> {
    (!log_probs_k.is_empty()).then(|| alpha_loss(temp_k, log_probs_k))
}

/// One branch's inputs to the composite policy loss.
#[derive(Clone, Copy)]
pub struct BranchPolicyInput<'a> {
    pub twin: &'a TwinQ,
    pub states: &'a Matrix,
    pub alpha: f64,
    pub noise: &'a Matrix,
}

/// `Σ_k mean_{s∈batch_k}[α_k log π(a|s) − min(Q_k1, Q_k2)(s, a)]` and its policy
/// gradient; an absent branch contributes nothing.
pub fn composite_policy_loss(
    policy: &GaussianPolicy,
    regular: Option<BranchPolicyInput<'_>>,
    inhibitory: Option<BranchPolicyInput<'_>>,
) -> Result<(f64, MlpGrads)> {
    if regular.is_none() && inhibitory.is_none() {
        return Err(Error::Usage("composite policy loss without any branch batch".into()));
    }
    let mut loss = 0.0;
    let mut grads = MlpGrads::zeros_like(&policy.net);
    for b in [regular, inhibitory].into_iter().flatten() {
        let sample = policy.sample(b.states, b.noise)?;
        let (l, ga, gl) = policy_term(b.twin, b.states, &sample, b.alpha)?;
        grads.add_assign(&policy.backward(&sample, &ga, &gl)?);
        loss += l;
    }
    Ok((loss, grads))
}
