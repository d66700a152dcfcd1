use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::shaping::LanderKinematics;
use super::{
    check_action, validate_prob, Cause, EnvSpec, Environment, RewardComponents, StepInfo, StepResult, TrialKind,
    DUMMY,
};
use crate::error::{Error, Result};

/// 8 kinematic slots plus the bomb zone's upper-left and bottom-right corners.
pub const LANDER_OBS_DIM: usize = 12;
/// The bomb zone is a square 10% of the frame width across.
pub const BOMB_HALF_SIZE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct LanderBombConfig {
    pub bomb_freq: f64,
    pub max_steps: usize,
    pub dt: f64,
    pub gravity: f64,
    pub main_accel: f64,
    pub side_accel: f64,
    /// Scale of the distance/speed/angle potential.
    pub potential_scale: f64,
    pub safe_vy: f64,
    pub safe_vx: f64,
    pub safe_angle: f64,
}

impl Default for LanderBombConfig {
    fn default() -> Self {
        Self {
            bomb_freq: 0.5,
            max_steps: 1000,
            dt: 0.05,
            gravity: 0.5,
            main_accel: 1.0,
            side_accel: 0.5,
            potential_scale: 85.0,
            safe_vy: 0.5,
            safe_vx: 0.5,
            safe_angle: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LanderBombState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub angle: f64,
    pub v_angle: f64,
    pub leg_contact_l: bool,
    pub leg_contact_r: bool,
    /// `(x_ul, y_ul, x_br, y_br)` once the bomb is up.
    pub bomb_zone: Option<[f64; 4]>,
}

#[derive(Clone, Debug)]
struct Episode {
    state: LanderBombState,
    trial: TrialKind,
    trigger_altitude: f64,
    bomb_center: (f64, f64),
    potential: f64,
    steps: usize,
    done: bool,
}

/// Point-mass lander over a pad at the origin, with a bomb zone that may
/// appear above the pad once the lander descends through a trigger altitude.
#[derive(Clone, Debug)]
pub struct LanderBomb {
    config: LanderBombConfig,
    ep: Option<Episode>,
}

impl LanderBombState {
    pub fn kinematics(&self) -> LanderKinematics {
        LanderKinematics {
            x: self.x,
            y: self.y,
            vx: self.vx,
            vy: self.vy,
            angle: self.angle,
            v_angle: self.v_angle,
        }
    }

    pub fn observation(&self) -> Vec<f64> {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        let mut obs = vec![
            self.x,
            self.y,
            self.vx,
            self.vy,
            self.angle,
            self.v_angle,
            flag(self.leg_contact_l),
            flag(self.leg_contact_r),
        ];
        obs.extend_from_slice(&self.bomb_zone.unwrap_or([DUMMY; 4]));
        obs
    }
}

impl LanderBomb {
    pub fn new(config: LanderBombConfig) -> Result<Self> {
        validate_prob("bomb frequency", config.bomb_freq)?;
        if config.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        Ok(Self { config, ep: None })
    }

    pub fn config(&self) -> &LanderBombConfig {
        &self.config
    }

    pub fn state(&self) -> Option<&LanderBombState> {
        self.ep.as_ref().map(|e| &e.state)
    }

    fn potential(&self, s: &LanderBombState, at_rest: bool) -> f64 {
        let speed = if at_rest { 0.0 } else { (s.vx * s.vx + s.vy * s.vy).sqrt() };
        -self.config.potential_scale * ((s.x * s.x + s.y * s.y).sqrt() + speed + s.angle.abs())
    }

    fn info_of(ep: &Episode) -> StepInfo {
        let present = ep.state.bomb_zone.is_some();
        StepInfo {
            bomb_present: present,
            bomb_center: present.then_some(ep.bomb_center),
            stuck: false,
            stuck_reward: 0.0,
            trial: ep.trial,
        }
    }

    /// Places the episode in an explicit state (tests and scripted probes).
    pub fn set_state(&mut self, state: LanderBombState, bomb_center: Option<(f64, f64)>) -> Result<()> {
        let Some(ep) = self.ep.as_mut() else {
            return Err(Error::Usage("set_state called before reset".into()));
        };
        ep.state = state;
        if let Some(c) = bomb_center {
            ep.bomb_center = c;
            ep.trial = TrialKind::Stop;
            ep.state.bomb_zone = Some(zone_corners(c));
        }
        let s = ep.state.clone();
        let p = self.potential(&s, false);
        self.ep.as_mut().unwrap().potential = p;
        Ok(())
    }
}

fn zone_corners(c: (f64, f64)) -> [f64; 4] {
    [c.0 - BOMB_HALF_SIZE, c.1 + BOMB_HALF_SIZE, c.0 + BOMB_HALF_SIZE, c.1 - BOMB_HALF_SIZE]
}

impl Environment for LanderBomb {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            name: "lander".into(),
            obs_dim: LANDER_OBS_DIM,
            act_dim: 2,
            max_steps: self.config.max_steps,
        }
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stop = rng.gen::<f64>() < self.config.bomb_freq;
        let state = LanderBombState {
            x: rng.gen_range(-0.15..=0.15),
            y: 1.4,
            vx: rng.gen_range(-0.1..=0.1),
            vy: rng.gen_range(-0.1..=0.0),
            angle: 0.0,
            v_angle: 0.0,
            leg_contact_l: false,
            leg_contact_r: false,
            bomb_zone: None,
        };
        let trigger_altitude = rng.gen_range(0.9..=1.1);
        let bomb_center = (rng.gen_range(-0.2..=0.2), rng.gen_range(0.1..=0.5));
        let potential = self.potential(&state, false);
        let obs = state.observation();
        self.ep = Some(Episode {
            state,
            trial: if stop { TrialKind::Stop } else { TrialKind::Go },
            trigger_altitude,
            bomb_center,
            potential,
            steps: 0,
            done: false,
        });
        Ok(obs)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let a = check_action(action, 2)?;
        let c = self.config.clone();
        let Some(mut ep) = self.ep.take() else {
            return Err(Error::Usage("step called before reset".into()));
        };
        if ep.done {
            self.ep = Some(ep);
            return Err(Error::Usage("step called after the episode ended".into()));
        }
        ep.steps += 1;
        let main = a[0].max(0.0);
        let side = a[1];
        let s = &mut ep.state;
        s.v_angle += (2.0 * side - 5.0 * s.angle - 2.0 * s.v_angle) * c.dt;
        s.angle += s.v_angle * c.dt;
        s.vx += side * c.side_accel * c.dt;
        s.vy += (main * c.main_accel - c.gravity) * c.dt;
        s.x += s.vx * c.dt;
        s.y += s.vy * c.dt;
        if s.y > 1.6 {
            s.y = 1.6;
            s.vy = s.vy.min(0.0);
        }

        let mut comp = RewardComponents {
            time_penalty: -0.1,
            base: -0.3 * main - 0.03 * side.abs(),
            ..Default::default()
        };
        let mut cause = Cause::Running;

        if ep.trial == TrialKind::Stop && s.bomb_zone.is_none() && s.y <= ep.trigger_altitude {
            s.bomb_zone = Some(zone_corners(ep.bomb_center));
        }
        let in_bomb = s.bomb_zone.is_some()
            && (s.x - ep.bomb_center.0).abs() <= BOMB_HALF_SIZE
            && (s.y - ep.bomb_center.1).abs() <= BOMB_HALF_SIZE;

        let mut at_rest = false;
        if in_bomb {
            comp.bomb_penalty = -150.0;
            cause = Cause::HitBomb;
        } else if s.x.abs() >= 1.0 {
            comp.base += -100.0;
            cause = Cause::Crashed;
        } else if s.y <= 0.0 {
            s.y = 0.0;
            let soft = s.vy >= -c.safe_vy && s.vx.abs() <= c.safe_vx && s.angle.abs() <= c.safe_angle;
            if soft {
                s.leg_contact_l = true;
                s.leg_contact_r = true;
                s.vx = 0.0;
                s.vy = 0.0;
                comp.base += 10.0 + 10.0 + 100.0;
                cause = Cause::Landed;
                at_rest = true;
            } else {
                comp.base += -100.0;
                cause = Cause::Crashed;
            }
        } else if ep.steps >= c.max_steps {
            cause = Cause::Timeout;
        }

        let state_now = ep.state.clone();
        let potential = self.potential(&state_now, at_rest);
        comp.shaping = potential - ep.potential;
        ep.potential = potential;
        ep.done = cause != Cause::Running;
        let result = StepResult {
            obs: state_now.observation(),
            reward_raw: comp.total(),
            components: comp,
            done: ep.done,
            cause,
            info: Self::info_of(&ep),
        };
        self.ep = Some(ep);
        Ok(result)
    }

    fn info(&self) -> StepInfo {
        self.ep.as_ref().map(Self::info_of).unwrap_or_default()
    }
}
