use rand::Rng;
use serde::{Deserialize, Serialize};

use super::critic::{policy_term, q_loss, TwinQ};
use super::policy::{GaussianPolicy, PolicySample};
use super::temperature::Temperature;
use super::{normal_matrix, SacBatch};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::numcore::{adam_step, polyak_update, Matrix, MlpGrads};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub target_entropy: f64,
    pub init_log_alpha: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256],
            lr: 5e-4,
            gamma: 0.99,
            tau: 1e-3,
            target_entropy: -3.0,
            init_log_alpha: 0.0,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SacMetrics {
    pub q_loss: f64,
    pub policy_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
    pub entropy: f64,
}

pub(crate) struct CriticStep {
    pub q_loss: f64,
    pub sample: PolicySample,
}

/// Critic half of one branch update: target noise, Bellman targets, one Adam
/// step per head, then a fresh reparameterized policy sample on the batch
/// states. Noise draws happen in that order.
pub(crate) fn critic_step<R: Rng + ?Sized>(
    policy: &GaussianPolicy,
    twin: &mut TwinQ,
    alpha: f64,
    batch: &SacBatch,
    gamma: f64,
    lr: f64,
    rng: &mut R,
) -> Result<CriticStep> {
    let d = policy.act_dim();
    let target_noise = normal_matrix(rng, batch.len(), d);
    let ql = q_loss(twin, batch, policy, alpha, gamma, &target_noise)?;
    if !ql.loss.is_finite() {
        return Err(Error::Numeric("non-finite critic loss".into()));
    }
    adam_step(&mut twin.q1, &ql.grads_q1, &mut twin.adam1, lr)?;
    adam_step(&mut twin.q2, &ql.grads_q2, &mut twin.adam2, lr)?;
    let noise = normal_matrix(rng, batch.len(), d);
    let sample = policy.sample(&batch.states, &noise)?;
    Ok(CriticStep {
        q_loss: ql.loss,
        sample,
    })
}

pub(crate) fn soft_update_targets(twin: &mut TwinQ, tau: f64) -> Result<()> {
    polyak_update(&mut twin.q1_target, &twin.q1, tau)?;
    polyak_update(&mut twin.q2_target, &twin.q2, tau)
}

pub(crate) struct PolicyTerm<'a> {
    pub twin: &'a TwinQ,
    pub states: &'a Matrix,
    pub sample: &'a PolicySample,
    pub alpha: f64,
}

/// Sums the per-term losses (each a mean over its own batch) and takes one
/// Adam step on the policy.
pub(crate) fn policy_update(policy: &mut GaussianPolicy, terms: &[PolicyTerm<'_>], lr: f64) -> Result<f64> {
    if terms.is_empty() {
        return Err(Error::Usage("policy update without any batch".into()));
    }
    let mut total = MlpGrads::zeros_like(&policy.net);
    let mut loss = 0.0;
    for t in terms {
        let (l, ga, gl) = policy_term(t.twin, t.states, t.sample, t.alpha)?;
        total.add_assign(&policy.backward(t.sample, &ga, &gl)?);
        loss += l;
    }
    adam_step(&mut policy.net, &total, &mut policy.adam, lr)?;
    Ok(loss)
}

/// Plain single-critic-pair SAC agent.
#[derive(Clone, Debug)]
pub struct SacAgent {
    pub policy: GaussianPolicy,
    pub twin: TwinQ,
    pub temp: Temperature,
    pub config: SacConfig,
}

impl SacAgent {
    /// Networks are initialized in the order policy, q1, q2.
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, config: SacConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let policy = GaussianPolicy::new(obs_dim, act_dim, &config.hidden, rng)?;
        let twin = TwinQ::new(obs_dim, act_dim, &config.hidden, rng)?;
        Ok(Self {
            policy,
            twin,
            temp: Temperature::new(config.init_log_alpha, config.target_entropy),
            config,
        })
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let noise = normal_matrix(rng, 1, self.policy.act_dim());
        Ok(self.policy.sample_action(state, noise.row(0))?.0)
    }

    pub fn act_deterministic(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.policy.mode(state)
    }

    /// One gradient step on both critics, the temperature, the targets and the
    /// policy, in that order.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &SacBatch, rng: &mut R) -> Result<SacMetrics> {
        batch.validate()?;
        let cfg = &self.config;
        let cs = critic_step(&self.policy, &mut self.twin, self.temp.alpha(), batch, cfg.gamma, cfg.lr, rng)?;
        let alpha_loss = self.temp.update(&cs.sample.log_probs, cfg.lr)?.unwrap_or(0.0);
        soft_update_targets(&mut self.twin, cfg.tau)?;
        let alpha = self.temp.alpha();
        let policy_loss = policy_update(
            &mut self.policy,
            &[PolicyTerm {
                twin: &self.twin,
                states: &batch.states,
                sample: &cs.sample,
                alpha,
            }],
            cfg.lr,
        )?;
        let n = cs.sample.log_probs.len() as f64;
        Ok(SacMetrics {
            q_loss: cs.q_loss,
            policy_loss,
            alpha_loss,
            alpha,
            entropy: -cs.sample.log_probs.iter().sum::<f64>() / n,
        })
    }
}

impl TwinQ {
    /// Writes `q1`, `q2`, `q1_target`, `q2_target` under `prefix` (empty for none).
    pub fn put_tensors(&self, ck: &mut Checkpoint, prefix: &str) {
        for (name, net) in [("q1", &self.q1), ("q2", &self.q2), ("q1_target", &self.q1_target), ("q2_target", &self.q2_target)] {
            ck.put_mlp(&format!("{prefix}{name}"), net);
        }
    }

    /// Rebuilds the four heads with fresh optimizer state.
    pub fn from_tensors(ck: &Checkpoint, prefix: &str) -> Result<Self> {
        let get = |n: &str| ck.get_mlp(&format!("{prefix}{n}"));
        TwinQ::from_parts(get("q1")?, get("q2")?, get("q1_target")?, get("q2_target")?)
            .map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

impl SacAgent {
    /// Tensors `{prefix}policy.*`, `{prefix}q1.*` … `{prefix}q2_target.*`, `{prefix}log_alpha`.
    pub fn put_tensors(&self, ck: &mut Checkpoint, prefix: &str) {
        ck.put_mlp(&format!("{prefix}policy"), &self.policy.net);
        self.twin.put_tensors(ck, prefix);
        ck.put_scalar(&format!("{prefix}log_alpha"), self.temp.log_alpha);
    }

    pub fn to_checkpoint(&self, config_text: &str) -> Checkpoint {
        let mut ck = Checkpoint::new(config_text);
        self.put_tensors(&mut ck, "");
        ck
    }

    /// Restores networks and temperature; optimizer moments start fresh.
    pub fn from_tensors(ck: &Checkpoint, prefix: &str, config: SacConfig) -> Result<Self> {
        config.validate()?;
        let policy = GaussianPolicy::from_net(ck.get_mlp(&format!("{prefix}policy"))?)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let twin = TwinQ::from_tensors(ck, prefix)?;
        if twin.input_dim() != policy.obs_dim() + policy.act_dim() {
            return Err(Error::Checkpoint("critic input does not match policy dims".into()));
        }
        let log_alpha = ck.get_scalar(&format!("{prefix}log_alpha"))?;
        Ok(Self {
            policy,
            twin,
            temp: Temperature::new(log_alpha, config.target_entropy),
            config,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn agent(seed: u64) -> SacAgent {
        let cfg = SacConfig {
            hidden: vec![8],
            ..Default::default()
        };
        SacAgent::new(3, 2, cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn batch(rng: &mut ChaCha8Rng, n: usize) -> SacBatch {
        SacBatch {
            states: normal_matrix(rng, n, 3),
            actions: normal_matrix(rng, n, 2),
            rewards: (0..n).map(|i| i as f64 * 0.1).collect(),
            next_states: normal_matrix(rng, n, 3),
            dones: (0..n).map(|i| (i % 3 == 0) as u8 as f64).collect(),
        }
    }

    #[test]
    fn identical_seeds_give_identical_metric_streams() {
        let run = || {
            let mut a = agent(5);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            (0..20)
                .map(|_| {
                    let b = batch(&mut rng, 16);
                    a.update(&b, &mut rng).unwrap()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn tensor_names_and_round_trip() {
        let a = agent(1);
        let ck = a.to_checkpoint("");
        let names: Vec<_> = ck.names().collect();
        for n in ["policy.w0", "q1.w0", "q2.b1", "q1_target.w1", "q2_target.b0", "log_alpha"] {
            assert!(names.contains(&n), "{n}");
        }
        let back = SacAgent::from_tensors(&ck, "", a.config.clone()).unwrap();
        assert_eq!(back.to_checkpoint("").to_bytes(), ck.to_bytes());
    }

    #[test]
    fn underfilled_or_bad_batches_are_rejected() {
        let mut a = agent(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut b = batch(&mut rng, 4);
        b.dones[0] = 0.5;
        assert!(a.update(&b, &mut rng).is_err());
    }
}
