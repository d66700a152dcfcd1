//! Deterministic desk-scale continuous-control environments with stop-signal
//! structure, their reward shapers and built-in inhibition rules.

mod lander;
mod rules;
mod runner;
pub mod shaping;
mod stopgo;
mod trace;

pub use lander::{LanderBomb, LanderBombConfig, LanderBombState, BOMB_HALF_SIZE, LANDER_OBS_DIM};
pub use rules::{
    proximity_inhibits, ConservativeBombRule, InhibitionRule, NeverInhibit, ProximityBombRule, StopZoneRule, StuckRule,
};
pub use runner::{RidgeRunner, RidgeRunnerConfig, RidgeRunnerState, RUNNER_OBS_DIM};
pub use shaping::{
    bomb_proxy_shaping, conservative_shaping, stuck_reward, zone_approach_shaping, LanderKinematics,
    StuckWindow,
};
pub use stopgo::{StopGo1D, StopGoConfig};
pub use trace::{trace_header, write_trace_row, TraceWriter};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observation slot value used while a bomb or stop zone is absent.
pub const DUMMY: f64 = -1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub max_steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    Landed,
    Crashed,
    HitBomb,
    Fell,
    Finished,
    Timeout,
    Running,
}

impl Cause {
    pub const ALL: [Cause; 7] = [
        Cause::Landed,
        Cause::Crashed,
        Cause::HitBomb,
        Cause::Fell,
        Cause::Finished,
        Cause::Timeout,
        Cause::Running,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Cause::Landed => "landed",
            Cause::Crashed => "crashed",
            Cause::HitBomb => "hit_bomb",
            Cause::Fell => "fell",
            Cause::Finished => "finished",
            Cause::Timeout => "timeout",
            Cause::Running => "running",
        }
    }
}

impl fmt::Display for Cause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Cause {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Cause::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown termination cause {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialKind {
    Go,
    Stop,
}

/// Additive reward parts; `reward_raw` is always their sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents {
    pub base: f64,
    pub time_penalty: f64,
    pub bomb_penalty: f64,
    pub shaping: f64,
    pub stuck: f64,
    pub fall: f64,
}

impl RewardComponents {
    pub const NAMES: [&'static str; 6] = ["base", "time_penalty", "bomb_penalty", "shaping", "stuck", "fall"];

    pub fn total(&self) -> f64 {
        self.base + self.time_penalty + self.bomb_penalty + self.shaping + self.stuck + self.fall
    }

    pub fn values(&self) -> [f64; 6] {
        [self.base, self.time_penalty, self.bomb_penalty, self.shaping, self.stuck, self.fall]
    }

    pub fn from_values(v: [f64; 6]) -> Self {
        Self {
            base: v[0],
            time_penalty: v[1],
            bomb_penalty: v[2],
            shaping: v[3],
            stuck: v[4],
            fall: v[5],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub bomb_present: bool,
    /// Bomb or stop-zone center; `Some` exactly when `bomb_present`.
    pub bomb_center: Option<(f64, f64)>,
    pub stuck: bool,
    /// Trailing-window stuck value, reported even when it is not part of the reward.
    pub stuck_reward: f64,
    pub trial: TrialKind,
}

impl Default for StepInfo {
    fn default() -> Self {
        Self {
            bomb_present: false,
            bomb_center: None,
            stuck: false,
            stuck_reward: 0.0,
            trial: TrialKind::Go,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward_raw: f64,
    pub components: RewardComponents,
    pub done: bool,
    pub cause: Cause,
    pub info: StepInfo,
}

impl StepResult {
    /// Terminal for bootstrapping purposes; a timeout is not.
    pub fn terminal(&self) -> bool {
        self.done && self.cause != Cause::Timeout
    }
}

/// Reset/step contract shared by the built-in and remote environments.
pub trait Environment {
    fn spec(&self) -> EnvSpec;

    /// Starts an episode whose randomness is fully determined by `seed`.
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;

    fn step(&mut self, action: &[f64]) -> Result<StepResult>;

    /// Info flags of the current state.
    fn info(&self) -> StepInfo;
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn spec(&self) -> EnvSpec {
        (**self).spec()
    }
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        (**self).reset(seed)
    }
    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        (**self).step(action)
    }
    fn info(&self) -> StepInfo {
        (**self).info()
    }
}

/// Built-in environment families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    Stopgo,
    Lander,
    Runner,
}

impl EnvKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnvKind::Stopgo => "stopgo",
            EnvKind::Lander => "lander",
            EnvKind::Runner => "runner",
        }
    }
}

impl FromStr for EnvKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stopgo" | "stop-go" => Ok(EnvKind::Stopgo),
            "lander" | "lander-bomb" => Ok(EnvKind::Lander),
            "runner" | "ridge-runner" => Ok(EnvKind::Runner),
            other => Err(Error::Usage(format!("unknown environment {other:?}"))),
        }
    }
}

/// Environment settings that cover all families; each family reads its own.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub kind: EnvKind,
    /// Stop-trial probability for lander and stop-go.
    pub bomb_freq: f64,
    /// Hardcore-trial probability for the runner.
    pub stop_prob: f64,
    pub max_steps: Option<usize>,
    pub fall_penalty: bool,
    pub stuck_in_reward: bool,
    pub track_length: Option<f64>,
    pub gap_prob: Option<f64>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            kind: EnvKind::Lander,
            bomb_freq: 0.5,
            stop_prob: 0.9,
            max_steps: None,
            fall_penalty: true,
            stuck_in_reward: false,
            track_length: None,
            gap_prob: None,
        }
    }
}

impl EnvConfig {
    pub fn build(&self) -> Result<Box<dyn Environment + Send>> {
        Ok(match self.kind {
            EnvKind::Stopgo => {
                let mut c = StopGoConfig {
                    stop_freq: self.bomb_freq,
                    ..Default::default()
                };
                if let Some(m) = self.max_steps {
                    c.max_steps = m;
                }
                Box::new(StopGo1D::new(c)?)
            }
            EnvKind::Lander => {
                let mut c = LanderBombConfig {
                    bomb_freq: self.bomb_freq,
                    ..Default::default()
                };
                if let Some(m) = self.max_steps {
                    c.max_steps = m;
                }
                Box::new(LanderBomb::new(c)?)
            }
            EnvKind::Runner => {
                let mut c = RidgeRunnerConfig {
                    stop_prob: self.stop_prob,
                    fall_penalty: self.fall_penalty,
                    stuck_in_reward: self.stuck_in_reward,
                    ..Default::default()
                };
                if let Some(m) = self.max_steps {
                    c.max_steps = m;
                }
                if let Some(l) = self.track_length {
                    c.track_length = l;
                }
                if let Some(g) = self.gap_prob {
                    c.gap_prob = g;
                }
                Box::new(RidgeRunner::new(c)?)
            }
        })
    }
}

pub(crate) fn check_action(action: &[f64], dim: usize) -> Result<Vec<f64>> {
    if action.len() != dim {
        return Err(Error::Shape(format!("action has {} entries, expected {dim}", action.len())));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::Numeric("non-finite action".into()));
    }
    Ok(action.iter().map(|a| a.clamp(-1.0, 1.0)).collect())
}

pub(crate) fn validate_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
    }
    Ok(())
}
