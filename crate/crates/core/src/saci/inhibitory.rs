use rand::Rng;
use serde::{Deserialize, Serialize};

use super::memory::Memory;
use crate::envs::{InhibitionRule, StepInfo};
use crate::error::{Error, Result};
use crate::replay::Branch;
use crate::sac::{SacAgent, SacBatch, SacConfig, SacMetrics};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InhibitorMode {
    /// The 1-D action selects the branch: inhibitory iff it is positive.
    HardSwitch,
    /// The 1-D action scales the stuck penalty in the inhibitory reward.
    SoftModulator,
}

/// Learned inhibitory policy `π_I`: a SAC learner with a 1-D action trained
/// on the raw environment reward from the shared replay.
#[derive(Clone, Debug)]
pub struct InhibitoryPolicy {
    pub mode: InhibitorMode,
    pub learner: SacAgent,
    /// Episodes to complete before `π_I` starts training.
    pub warmup_episodes: usize,
}

impl InhibitoryPolicy {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        mode: InhibitorMode,
        config: SacConfig,
        warmup_episodes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            mode,
            learner: SacAgent::new(obs_dim, 1, config, rng)?,
            warmup_episodes,
        })
    }

    /// Stochastic squashed action for data collection.
    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<f64> {
        Ok(self.learner.act(state, rng)?[0])
    }

    /// Mode action `tanh(μ)`, used at evaluation.
    pub fn act_deterministic(&self, state: &[f64]) -> Result<f64> {
        Ok(self.learner.act_deterministic(state)?[0])
    }
}

pub fn switch_branch(squashed_action: f64) -> Branch {
    if squashed_action > 0.0 {
        Branch::I
    } else {
        Branch::R
    }
}

/// `w = (a + 1) / 2` for a squashed action `a = tanh(u)`.
pub fn weight_from_action(squashed_action: f64) -> f64 {
    0.5 * (squashed_action + 1.0)
}

/// Modulator weight of `π_I` at `state`: the mode action when `noise` is
/// `None`, otherwise the reparameterized sample for that noise.
pub fn modulator_weight(ip: &InhibitoryPolicy, state: &[f64], noise: Option<f64>) -> Result<f64> {
    if ip.mode != InhibitorMode::SoftModulator {
        return Err(Error::Usage("modulator weight requested from a hard-switch inhibitory policy".into()));
    }
    let a = match noise {
        None => ip.act_deterministic(state)?,
        Some(z) => ip.learner.policy.sample_action(state, &[z])?.0[0],
    };
    Ok(weight_from_action(a))
}

/// `r_I* = r_0 + w·r_stuck − r_fall`, where `r_fall` is the (signed) fall
/// penalty contained in `r_0`, so subtracting it removes the penalty.
pub fn modulated_inhibitory_reward(r0: f64, w: f64, r_stuck: f64, r_fall: f64) -> f64 {
    r0 + w * r_stuck - r_fall
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Classification {
    pub branch: Branch,
    /// Squashed `π_I` action stored with the transition (0 without `π_I`).
    pub inhibitor_action: f64,
    /// Modulator weight in soft mode.
    pub weight: Option<f64>,
}

/// Branch of a state: from the hard switch when `π_I` is in that mode,
/// otherwise from `rule`; soft mode additionally reports its weight.
pub fn classify_state(
    rule: &dyn InhibitionRule,
    inhibitor: Option<(InhibitorMode, f64)>,
    obs: &[f64],
    info: &StepInfo,
) -> Classification {
    match inhibitor {
        Some((InhibitorMode::HardSwitch, a)) => Classification {
            branch: switch_branch(a),
            inhibitor_action: a,
            weight: None,
        },
        Some((InhibitorMode::SoftModulator, a)) => Classification {
            branch: rule.classify(obs, info),
            inhibitor_action: a,
            weight: Some(weight_from_action(a)),
        },
        None => Classification {
            branch: rule.classify(obs, info),
            inhibitor_action: 0.0,
            weight: None,
        },
    }
}

/// One SAC step of `π_I` on the stored `π_I` actions and raw rewards. A no-op
/// (`None`) before warmup completes or while the replay is underfilled.
pub fn inhibitory_policy_update<S: Rng + ?Sized, U: Rng + ?Sized>(
    ip: &mut InhibitoryPolicy,
    memory: &Memory,
    batch_size: usize,
    episodes_done: usize,
    sampler: &mut S,
    update: &mut U,
) -> Result<Option<SacMetrics>> {
    if episodes_done < ip.warmup_episodes {
        return Ok(None);
    }
    let Some(sb) = memory.sample_joint(batch_size, sampler)? else {
        return Ok(None);
    };
    let batch = SacBatch {
        states: sb.batch.states,
        actions: sb.inhibitor_actions,
        rewards: sb.raw_rewards,
        next_states: sb.batch.next_states,
        dones: sb.batch.dones,
    };
    ip.learner.update(&batch, update).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{NeverInhibit, StuckRule};
    use crate::replay::Transition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ip(mode: InhibitorMode, warmup: usize) -> InhibitoryPolicy {
        let cfg = SacConfig {
            hidden: vec![8],
            ..Default::default()
        };
        InhibitoryPolicy::new(2, mode, cfg, warmup, &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    #[test]
    fn weight_mapping() {
        assert_eq!(weight_from_action(0.0), 0.5);
        assert!((weight_from_action(30f64.tanh()) - 1.0).abs() < 1e-12);
        assert!((modulated_inhibitory_reward(0.1, 0.5, -0.6, 0.0) + 0.2).abs() < 1e-12);
    }

    #[test]
    fn modulator_requires_soft_mode() {
        let hard = ip(InhibitorMode::HardSwitch, 0);
        assert!(matches!(modulator_weight(&hard, &[0.0, 0.0], None), Err(Error::Usage(_))));
        let soft = ip(InhibitorMode::SoftModulator, 0);
        let w = modulator_weight(&soft, &[0.3, -0.2], None).unwrap();
        assert!((0.0..=1.0).contains(&w));
        let mut zero = soft.clone();
        for w in zero.learner.policy.net.weights.iter_mut() {
            w.data_mut().fill(0.0);
        }
        assert_eq!(modulator_weight(&zero, &[0.3, -0.2], None).unwrap(), 0.5);
    }

    #[test]
    fn classification_sources() {
        let stuck = StepInfo {
            stuck: true,
            ..Default::default()
        };
        let c = classify_state(&NeverInhibit, Some((InhibitorMode::HardSwitch, 0.2)), &[], &stuck);
        assert_eq!(c.branch, Branch::I);
        let c = classify_state(&NeverInhibit, Some((InhibitorMode::HardSwitch, -0.2)), &[], &stuck);
        assert_eq!(c.branch, Branch::R);
        let c = classify_state(&StuckRule, Some((InhibitorMode::SoftModulator, -1.0 + 1e-9)), &[], &stuck);
        assert_eq!(c.branch, Branch::I);
        assert!(c.weight.unwrap() < 1e-6);
        assert_eq!(classify_state(&StuckRule, None, &[], &StepInfo::default()).inhibitor_action, 0.0);
    }

    #[test]
    fn no_update_before_warmup() {
        let mut p = ip(InhibitorMode::HardSwitch, 100);
        let mut m = Memory::new(true, 100, 2, 1).unwrap();
        for k in 0..20 {
            m.push(&Transition {
                state: vec![k as f64, 0.0],
                action: vec![0.0],
                branch: Branch::R,
                reward: 0.0,
                reward_raw: 1.0,
                inhibitor_action: 0.1,
                next_state: vec![0.0, 0.0],
                done: false,
            })
            .unwrap();
        }
        let before = p.learner.policy.net.clone();
        let (mut s, mut u) = (ChaCha8Rng::seed_from_u64(0), ChaCha8Rng::seed_from_u64(1));
        assert!(inhibitory_policy_update(&mut p, &m, 8, 50, &mut s, &mut u).unwrap().is_none());
        assert_eq!(p.learner.policy.net, before);
        assert!(inhibitory_policy_update(&mut p, &m, 8, 100, &mut s, &mut u).unwrap().is_some());
        assert_ne!(p.learner.policy.net, before);
    }
}
