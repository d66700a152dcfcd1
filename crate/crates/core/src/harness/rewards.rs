//! Reward plan: how the raw environment reward of a transition becomes the
//! plain-SAC reward and the two branch rewards.
//!
//! Lander: `r_R` is the raw reward (bomb penalty included). `r_I` replaces it
//! with the bomb shaping plus the hit penalty; plain SAC adds the same shaping
//! to the raw reward wherever the inhibition rule fires.
//!
//! Runner: with `r_0` the raw reward, `r_fall` its fall component and `r_stuck`
//! the trailing-window value, plain SAC gets `r_0 + r_stuck − r_fall`, `r_R =
//! r_0 − r_fall` and `r_I = r_0 + w·r_stuck − r_fall` (`w = 1` unless the soft
//! modulator supplies it). Subtracting `r_fall` removes the fall penalty.
//!
//! Stop-go: `r_I` and plain SAC add a zone-approach penalty to the raw reward
//! while the zone is up (SAC only where the rule fires).

use super::config::Shaping;
use crate::envs::{
    bomb_proxy_shaping, conservative_shaping, zone_approach_shaping, EnvKind, LanderKinematics, StepResult,
};
use crate::saci::modulated_inhibitory_reward;

/// Reach of the stop-zone approach penalty.
pub const ZONE_REACH: f64 = 0.3;

/// Distance beyond which the bomb-proximity field vanishes.
pub const PROXY_RADIUS: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionRewards {
    pub sac: f64,
    pub regular: f64,
    pub inhibitory: f64,
}

fn lander_kinematics(obs: &[f64]) -> LanderKinematics {
    LanderKinematics {
        x: obs[0],
        y: obs[1],
        vx: obs[2],
        vy: obs[3],
        angle: obs[4],
        v_angle: obs[5],
    }
}

/// Bomb-proximity field at the post-transition state, zero beyond its radius.
pub fn lander_proxy(result: &StepResult) -> f64 {
    match result.info.bomb_center.filter(|_| result.info.bomb_present) {
        Some((xb, yb)) => {
            let d = (result.obs[0] - xb).hypot(result.obs[1] - yb);
            bomb_proxy_shaping(d.min(PROXY_RADIUS))
        }
        None => 0.0,
    }
}

/// Rewards of one transition. `rule_fires` is the rule's verdict on the
/// pre-transition state; `weight` the soft-modulator weight, if any.
pub fn transition_rewards(
    env: EnvKind,
    shaping: Shaping,
    rule_fires: bool,
    result: &StepResult,
    weight: Option<f64>,
) -> TransitionRewards {
    let raw = result.reward_raw;
    match env {
        EnvKind::Lander => {
            let term = match shaping {
                Shaping::None => None,
                Shaping::Proxy => Some(lander_proxy(result)),
                Shaping::Conservative => Some(
                    result
                        .info
                        .bomb_center
                        .filter(|_| result.info.bomb_present)
                        .map_or(0.0, |c| conservative_shaping(&lander_kinematics(&result.obs), c)),
                ),
            };
            match term {
                None => TransitionRewards {
                    sac: raw,
                    regular: raw,
                    inhibitory: raw,
                },
                Some(t) => TransitionRewards {
                    sac: raw + if rule_fires { t } else { 0.0 },
                    regular: raw,
                    inhibitory: t + result.components.bomb_penalty,
                },
            }
        }
        EnvKind::Runner => {
            let r_fall = result.components.fall;
            let r_stuck = match shaping {
                Shaping::None => 0.0,
                _ => result.info.stuck_reward,
            };
            // a stuck term already inside the raw reward is not counted twice
            let r0 = raw - result.components.stuck;
            TransitionRewards {
                sac: r0 + r_stuck - r_fall,
                regular: r0 - r_fall,
                inhibitory: modulated_inhibitory_reward(r0, weight.unwrap_or(1.0), r_stuck, r_fall),
            }
        }
        EnvKind::Stopgo => {
            let term = match shaping {
                Shaping::None => 0.0,
                _ if result.info.bomb_present => {
                    zone_approach_shaping(result.obs[2] - result.obs[0], result.obs[1], ZONE_REACH)
                }
                _ => 0.0,
            };
            TransitionRewards {
                sac: raw + if rule_fires { term } else { 0.0 },
                regular: raw,
                inhibitory: raw + term,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Cause, RewardComponents, StepInfo};

    fn result(obs: Vec<f64>, comp: RewardComponents, info: StepInfo) -> StepResult {
        StepResult {
            obs,
            reward_raw: comp.total(),
            components: comp,
            done: false,
            cause: Cause::Running,
            info,
        }
    }

    #[test]
    fn runner_fall_penalty_is_removed() {
        let comp = RewardComponents {
            base: 0.5,
            fall: -100.0,
            ..Default::default()
        };
        let info = StepInfo {
            stuck: true,
            stuck_reward: -0.6,
            ..Default::default()
        };
        let r = transition_rewards(EnvKind::Runner, Shaping::Proxy, true, &result(vec![0.0; 12], comp, info), None);
        assert!((r.sac - (0.5 - 0.6)).abs() < 1e-12);
        assert!((r.regular - 0.5).abs() < 1e-12);
        assert_eq!(r.sac, r.inhibitory);
        let r = transition_rewards(EnvKind::Runner, Shaping::Proxy, true, &result(vec![0.0; 12], comp, info), Some(0.5));
        assert!((r.inhibitory - (0.5 - 0.3)).abs() < 1e-12);
    }

    #[test]
    fn runner_stuck_in_raw_counted_once() {
        let comp = RewardComponents {
            base: -0.1,
            stuck: -0.6,
            ..Default::default()
        };
        let info = StepInfo {
            stuck: true,
            stuck_reward: -0.6,
            ..Default::default()
        };
        let r = transition_rewards(EnvKind::Runner, Shaping::Proxy, true, &result(vec![0.0; 12], comp, info), None);
        assert!((r.sac + 0.7).abs() < 1e-12);
    }

    #[test]
    fn lander_proxy_replaces_raw_in_inhibitory_branch() {
        let comp = RewardComponents {
            base: 1.0,
            time_penalty: -0.1,
            ..Default::default()
        };
        let info = StepInfo {
            bomb_present: true,
            bomb_center: Some((0.0, 0.5)),
            ..Default::default()
        };
        let mut obs = vec![0.0; 12];
        obs[1] = 0.7;
        let res = result(obs, comp, info);
        let r = transition_rewards(EnvKind::Lander, Shaping::Proxy, true, &res, None);
        assert!((r.inhibitory + 1.0).abs() < 1e-9);
        assert!((r.sac - (0.9 - 1.0)).abs() < 1e-9);
        assert_eq!(r.regular, res.reward_raw);
        let r = transition_rewards(EnvKind::Lander, Shaping::Proxy, false, &res, None);
        assert_eq!(r.sac, res.reward_raw);
        let r = transition_rewards(EnvKind::Lander, Shaping::None, true, &res, None);
        assert_eq!((r.sac, r.inhibitory), (res.reward_raw, res.reward_raw));
    }

    #[test]
    fn proxy_vanishes_far_from_bomb() {
        let info = StepInfo {
            bomb_present: true,
            bomb_center: Some((0.0, 0.2)),
            ..Default::default()
        };
        let mut obs = vec![0.0; 12];
        obs[1] = 1.2;
        assert_eq!(lander_proxy(&result(obs, RewardComponents::default(), info)), 0.0);
    }

    #[test]
    fn stopgo_zone_penalty_only_while_zone_up() {
        let info = StepInfo {
            bomb_present: true,
            bomb_center: Some((0.75, 0.0)),
            ..Default::default()
        };
        let comp = RewardComponents {
            time_penalty: -0.1,
            ..Default::default()
        };
        let res = result(vec![0.5, 0.5, 0.7, 0.8], comp, info);
        let r = transition_rewards(EnvKind::Stopgo, Shaping::Proxy, true, &res, None);
        assert!(r.inhibitory < -0.1);
        assert_eq!(r.sac, r.inhibitory);
        let gone = result(vec![0.5, 0.5, -1.0, -1.0], comp, StepInfo::default());
        let r = transition_rewards(EnvKind::Stopgo, Shaping::Proxy, true, &gone, None);
        assert_eq!(r.inhibitory, -0.1);
    }
}
