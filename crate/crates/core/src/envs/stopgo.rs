use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    check_action, validate_prob, Cause, EnvSpec, Environment, RewardComponents, StepInfo, StepResult, TrialKind,
    DUMMY,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct StopGoConfig {
    pub stop_freq: f64,
    pub max_steps: usize,
    pub dt: f64,
    pub accel: f64,
    pub goal: f64,
    pub goal_reward: f64,
    pub zone_penalty: f64,
    pub time_penalty: f64,
    pub zone_width: f64,
    /// Position range that triggers the zone on stop trials.
    pub trigger: (f64, f64),
    /// Range of the zone's left edge.
    pub zone_left: (f64, f64),
    /// Steps the agent must hold still before the zone clears, inclusive range.
    pub zone_duration: (usize, usize),
    /// Speed below which the agent counts as holding still.
    pub hold_speed: f64,
}

impl Default for StopGoConfig {
    fn default() -> Self {
        Self {
            stop_freq: 0.5,
            max_steps: 1000,
            dt: 0.05,
            accel: 2.0,
            goal: 1.0,
            goal_reward: 100.0,
            zone_penalty: -150.0,
            time_penalty: -0.1,
            zone_width: 0.1,
            trigger: (0.2, 0.3),
            zone_left: (0.6, 0.75),
            zone_duration: (10, 20),
            hold_speed: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Episode {
    pos: f64,
    vel: f64,
    trial: TrialKind,
    trigger: f64,
    zone_left: f64,
    duration: usize,
    /// Steps remaining while the zone is up; `None` before it appears.
    zone_left_steps: Option<usize>,
    steps: usize,
    done: bool,
}

/// One-dimensional stop-signal task: drive a point mass to the goal; on stop
/// trials a forbidden zone appears partway and clears only after the agent
/// has held still for a while.
///
/// Observation: `[position, velocity, zone_left, zone_right]`, with `-1` in
/// the zone slots while no zone is up.
#[derive(Clone, Debug)]
pub struct StopGo1D {
    config: StopGoConfig,
    ep: Option<Episode>,
}

impl StopGo1D {
    pub const OBS_DIM: usize = 4;

    pub fn new(config: StopGoConfig) -> Result<Self> {
        validate_prob("stop frequency", config.stop_freq)?;
        if config.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        Ok(Self { config, ep: None })
    }

    pub fn config(&self) -> &StopGoConfig {
        &self.config
    }

    fn zone_up(ep: &Episode) -> bool {
        matches!(ep.zone_left_steps, Some(n) if n > 0)
    }

    fn observe(&self, ep: &Episode) -> Vec<f64> {
        if Self::zone_up(ep) {
            vec![ep.pos, ep.vel, ep.zone_left, ep.zone_left + self.config.zone_width]
        } else {
            vec![ep.pos, ep.vel, DUMMY, DUMMY]
        }
    }

    fn info_of(&self, ep: &Episode) -> StepInfo {
        let up = Self::zone_up(ep);
        StepInfo {
            bomb_present: up,
            bomb_center: up.then(|| (ep.zone_left + 0.5 * self.config.zone_width, 0.0)),
            stuck: false,
            stuck_reward: 0.0,
            trial: ep.trial,
        }
    }

    /// Scripted policy for the default dynamics: drives forward, and while a
    /// zone is up ahead brakes to a standstill and holds there.
    pub fn scripted_action(obs: &[f64]) -> f64 {
        let (pos, vel, zl) = (obs[0], obs[1], obs[2]);
        if zl == DUMMY {
            return 1.0;
        }
        let gap = zl - pos;
        if gap > 0.0 && gap < 0.45 {
            // cancel the velocity in one step where the thrust allows
            (-vel / (2.0 * 0.05)).clamp(-1.0, 1.0)
        } else {
            1.0
        }
    }
}

impl Environment for StopGo1D {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            name: "stopgo".into(),
            obs_dim: Self::OBS_DIM,
            act_dim: 1,
            max_steps: self.config.max_steps,
        }
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let c = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stop = rng.gen::<f64>() < c.stop_freq;
        let ep = Episode {
            pos: 0.0,
            vel: 0.0,
            trial: if stop { TrialKind::Stop } else { TrialKind::Go },
            trigger: rng.gen_range(c.trigger.0..=c.trigger.1),
            zone_left: rng.gen_range(c.zone_left.0..=c.zone_left.1),
            duration: rng.gen_range(c.zone_duration.0..=c.zone_duration.1),
            zone_left_steps: None,
            steps: 0,
            done: false,
        };
        let obs = self.observe(&ep);
        self.ep = Some(ep);
        Ok(obs)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let a = check_action(action, 1)?[0];
        let c = self.config.clone();
        let Some(mut ep) = self.ep.take() else {
            return Err(Error::Usage("step called before reset".into()));
        };
        if ep.done {
            self.ep = Some(ep);
            return Err(Error::Usage("step called after the episode ended".into()));
        }
        ep.steps += 1;
        ep.vel = (ep.vel + c.accel * a * c.dt).clamp(-1.0, 1.0);
        ep.pos += ep.vel * c.dt;
        if ep.pos < 0.0 {
            ep.pos = 0.0;
            ep.vel = 0.0;
        }

        // zone countdown, then spawn on stop trials
        if let Some(n) = ep.zone_left_steps.as_mut() {
            if ep.vel.abs() < c.hold_speed {
                *n = n.saturating_sub(1);
            }
        } else if ep.trial == TrialKind::Stop && ep.pos >= ep.trigger {
            ep.zone_left_steps = Some(ep.duration);
        }

        let mut comp = RewardComponents {
            time_penalty: c.time_penalty,
            ..Default::default()
        };
        let mut cause = Cause::Running;
        let zone_right = ep.zone_left + c.zone_width;
        if Self::zone_up(&ep) && ep.pos >= ep.zone_left && ep.pos <= zone_right {
            comp.bomb_penalty = c.zone_penalty;
            cause = Cause::HitBomb;
        } else if ep.pos >= c.goal {
            comp.base = c.goal_reward;
            cause = Cause::Finished;
        } else if ep.steps >= c.max_steps {
            cause = Cause::Timeout;
        }
        ep.done = cause != Cause::Running;
        let result = StepResult {
            obs: self.observe(&ep),
            reward_raw: comp.total(),
            components: comp,
            done: ep.done,
            cause,
            info: self.info_of(&ep),
        };
        self.ep = Some(ep);
        Ok(result)
    }

    fn info(&self) -> StepInfo {
        self.ep.as_ref().map(|ep| self.info_of(ep)).unwrap_or_default()
    }
}
