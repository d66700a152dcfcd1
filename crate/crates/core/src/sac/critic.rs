use rand::Rng;

use super::policy::{GaussianPolicy, PolicySample};
use super::SacBatch;
use crate::error::{shape_err, Error, Result};
use crate::numcore::{AdamState, Matrix, Mlp, MlpGrads};

/// Twin soft-Q critics with their target copies and optimizer states.
#[derive(Clone, Debug)]
pub struct TwinQ {
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub adam1: AdamState,
    pub adam2: AdamState,
}

impl TwinQ {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut sizes = vec![obs_dim + act_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let q1 = Mlp::init_with_rng(&sizes, rng)?;
        let q2 = Mlp::init_with_rng(&sizes, rng)?;
        Self::from_nets(q1, q2)
    }

    /// Online heads; targets start as copies.
    pub fn from_nets(q1: Mlp, q2: Mlp) -> Result<Self> {
        Self::from_parts(q1.clone(), q2.clone(), q1, q2)
    }

    pub fn from_parts(q1: Mlp, q2: Mlp, q1_target: Mlp, q2_target: Mlp) -> Result<Self> {
        if q1.output_dim() != 1 || !q1.same_shape(&q2) || !q1.same_shape(&q1_target) || !q1.same_shape(&q2_target) {
            return Err(shape_err("twin critics must share one scalar-output shape"));
        }
        Ok(Self {
            adam1: AdamState::for_mlp(&q1),
            adam2: AdamState::for_mlp(&q2),
            q1,
            q2,
            q1_target,
            q2_target,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.q1.input_dim()
    }

    fn values(net: &Mlp, input: &Matrix) -> Result<Vec<f64>> {
        let out = net.predict(input)?;
        if !out.all_finite() {
            return Err(Error::Numeric("critic produced a non-finite value".into()));
        }
        Ok(out.into_data())
    }

    /// `min(Q̄1, Q̄2)` on the target heads.
    pub fn target_min(&self, states: &Matrix, actions: &Matrix) -> Result<Vec<f64>> {
        let x = states.hcat(actions)?;
        let a = Self::values(&self.q1_target, &x)?;
        let b = Self::values(&self.q2_target, &x)?;
        Ok(a.into_iter().zip(b).map(|(a, b)| a.min(b)).collect())
    }

    /// `min(Q1, Q2)` on the online heads.
    pub fn online_min(&self, states: &Matrix, actions: &Matrix) -> Result<Vec<f64>> {
        let x = states.hcat(actions)?;
        let a = Self::values(&self.q1, &x)?;
        let b = Self::values(&self.q2, &x)?;
        Ok(a.into_iter().zip(b).map(|(a, b)| a.min(b)).collect())
    }
}

/// `V̄(s') = min(Q̄1, Q̄2)(s', a') − α log π(a'|s')` with `a'` sampled from `noise`.
pub fn target_value(twin: &TwinQ, policy: &GaussianPolicy, alpha: f64, next_states: &Matrix, noise: &Matrix) -> Result<Vec<f64>> {
    let sample = policy.sample(next_states, noise)?;
    let q = twin.target_min(next_states, &sample.actions)?;
    Ok(q.into_iter()
        .zip(&sample.log_probs)
        .map(|(q, lp)| q - alpha * lp)
        .collect())
}

/// Bellman targets `y = r + γ (1 − done) V̄(s')`.
pub fn td_targets(
    twin: &TwinQ,
    policy: &GaussianPolicy,
    alpha: f64,
    batch: &SacBatch,
    gamma: f64,
    noise: &Matrix,
) -> Result<Vec<f64>> {
    let v = target_value(twin, policy, alpha, &batch.next_states, noise)?;
    Ok(batch
        .rewards
        .iter()
        .zip(&batch.dones)
        .zip(v)
        .map(|((r, d), v)| if *d != 0.0 { *r } else { r + gamma * v })
        .collect())
}

#[derive(Clone, Debug)]
pub struct QLoss {
    /// Mean of the two head losses.
    pub loss: f64,
    pub loss_q1: f64,
    pub loss_q2: f64,
    /// Gradient of `loss_q1` with respect to `q1`.
    pub grads_q1: MlpGrads,
    /// Gradient of `loss_q2` with respect to `q2`.
    pub grads_q2: MlpGrads,
    pub targets: Vec<f64>,
}

fn head_loss(net: &Mlp, input: &Matrix, targets: &[f64]) -> Result<(f64, MlpGrads)> {
    let (out, cache) = net.forward(input)?;
    let b = targets.len() as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(targets.len(), 1);
    for (i, y) in targets.iter().enumerate() {
        let diff = out.get(i, 0) - y;
        loss += 0.5 * diff * diff;
        grad.set(i, 0, diff / b);
    }
    let (grads, _) = net.backward(&cache, &grad)?;
    Ok((loss / b, grads))
}

/// Critic loss against fixed targets (no gradient flows into `targets`).
pub fn q_loss_with_targets(twin: &TwinQ, batch: &SacBatch, targets: Vec<f64>) -> Result<QLoss> {
    if batch.is_empty() {
        return Err(Error::Usage("critic loss on an empty batch".into()));
    }
    if targets.len() != batch.len() {
        return Err(shape_err("one target per transition required"));
    }
    let input = batch.states.hcat(&batch.actions)?;
    let (loss_q1, grads_q1) = head_loss(&twin.q1, &input, &targets)?;
    let (loss_q2, grads_q2) = head_loss(&twin.q2, &input, &targets)?;
    Ok(QLoss {
        loss: 0.5 * (loss_q1 + loss_q2),
        loss_q1,
        loss_q2,
        grads_q1,
        grads_q2,
        targets,
    })
}

/// Soft Bellman residual `½ (Q(s,a) − y)²` averaged over the batch and both heads.
pub fn q_loss(
    twin: &TwinQ,
    batch: &SacBatch,
    policy: &GaussianPolicy,
    alpha: f64,
    gamma: f64,
    noise: &Matrix,
) -> Result<QLoss> {
    if batch.is_empty() {
        return Err(Error::Usage("critic loss on an empty batch".into()));
    }
    let targets = td_targets(twin, policy, alpha, batch, gamma, noise)?;
    q_loss_with_targets(twin, batch, targets)
}

/// Policy-side pieces of one branch term `mean_b[α log π(a|s) − min(Q1,Q2)(s,a)]`:
/// returns the loss and its gradients with respect to actions and log-probs.
/// Critic parameters are read, never differentiated.
pub(crate) fn policy_term(
    twin: &TwinQ,
    states: &Matrix,
    sample: &PolicySample,
    alpha: f64,
) -> Result<(f64, Matrix, Vec<f64>)> {
    let b = states.rows();
    if b == 0 {
        return Err(Error::Usage("policy loss on an empty batch".into()));
    }
    let obs_dim = states.cols();
    let act_dim = sample.actions.cols();
    let input = states.hcat(&sample.actions)?;
    let (o1, c1) = twin.q1.forward(&input)?;
    let (o2, c2) = twin.q2.forward(&input)?;
    let inv_b = 1.0 / b as f64;
    let mut g1 = Matrix::zeros(b, 1);
    let mut g2 = Matrix::zeros(b, 1);
    let mut loss = 0.0;
    for i in 0..b {
        let (q1, q2) = (o1.get(i, 0), o2.get(i, 0));
        let qmin = if q1 <= q2 {
            g1.set(i, 0, -inv_b);
            q1
        } else {
            g2.set(i, 0, -inv_b);
            q2
        };
        loss += alpha * sample.log_probs[i] - qmin;
    }
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite policy loss".into()));
    }
    let gi1 = twin.q1.backward_input(&c1, &g1)?;
    let gi2 = twin.q2.backward_input(&c2, &g2)?;
    let mut grad_actions = Matrix::zeros(b, act_dim);
    for i in 0..b {
        for j in 0..act_dim {
            grad_actions.set(i, j, gi1.get(i, obs_dim + j) + gi2.get(i, obs_dim + j));
        }
    }
    Ok((loss * inv_b, grad_actions, vec![alpha * inv_b; b]))
}

#[derive(Clone, Debug)]
pub struct PolicyLoss {
    pub loss: f64,
    pub grads: MlpGrads,
    pub log_probs: Vec<f64>,
}

/// `J_π = mean[α log π(a|s) − min(Q1, Q2)(s, a)]` with reparameterized actions.
pub fn policy_loss(policy: &GaussianPolicy, twin: &TwinQ, states: &Matrix, alpha: f64, noise: &Matrix) -> Result<PolicyLoss> {
    let sample = policy.sample(states, noise)?;
    let (loss, ga, gl) = policy_term(twin, states, &sample, alpha)?;
    let grads = policy.backward(&sample, &ga, &gl)?;
    Ok(PolicyLoss {
        loss,
        grads,
        log_probs: sample.log_probs,
    })
}
