use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::shaping::StuckWindow;
use super::{
    check_action, validate_prob, Cause, EnvSpec, Environment, RewardComponents, StepInfo, StepResult, TrialKind,
};
use crate::error::{Error, Result};

/// 8 proprioceptive slots plus 4 forward terrain sensors.
pub const RUNNER_OBS_DIM: usize = 12;

const SENSOR_OFFSETS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

#[derive(Clone, Debug, PartialEq)]
pub struct RidgeRunnerConfig {
    /// Probability that an episode is a hardcore (obstacle) trial.
    pub stop_prob: f64,
    pub max_steps: usize,
    pub track_length: f64,
    /// Share of obstacles that are gaps rather than blocks.
    pub gap_prob: f64,
    pub fall_penalty: bool,
    pub stuck_in_reward: bool,
    pub dt: f64,
    pub gravity: f64,
    pub jump_speed: f64,
    pub block_height: f64,
    pub block_width: f64,
    pub gap_width: f64,
    /// Total progress reward for covering the whole track.
    pub progress_reward: f64,
    /// Per-joint torque cost at full actuation.
    pub torque_cost: f64,
    /// Share of the track before the first obstacle.
    pub start_pad: f64,
    pub spacing: (f64, f64),
}

impl Default for RidgeRunnerConfig {
    fn default() -> Self {
        Self {
            stop_prob: 0.9,
            max_steps: 2000,
            track_length: 10.0,
            gap_prob: 0.3,
            fall_penalty: true,
            stuck_in_reward: false,
            dt: 0.05,
            gravity: 4.0,
            jump_speed: 2.4,
            block_height: 0.3,
            block_width: 0.3,
            gap_width: 0.35,
            progress_reward: 300.0,
            torque_cost: 0.1,
            start_pad: 0.1,
            spacing: (1.5, 2.5),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Terrain {
    Flat,
    Block,
    Gap,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Obstacle {
    start: f64,
    end: f64,
    kind: Terrain,
}

/// Full simulator state; only the relative quantities reach the observation.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeRunnerState {
    pub x: f64,
    pub vx: f64,
    /// Hull height above the zero ground level.
    pub h: f64,
    pub vh: f64,
    pub pitch: f64,
    /// `[hip_l, knee_l, hip_r, knee_r]`, each in `[-1, 1]`.
    pub joints: [f64; 4],
    pub sensors: [f64; 4],
    pub recent_rewards: StuckWindow,
}

#[derive(Clone, Debug)]
struct Episode {
    state: RidgeRunnerState,
    trial: TrialKind,
    obstacles: Vec<Obstacle>,
    steps: usize,
    done: bool,
}

/// One-dimensional hopper analog of a legged walker: hips drive forward
/// motion, bending both knees jumps, blocks stop the hull, gaps swallow it.
#[derive(Clone, Debug)]
pub struct RidgeRunner {
    config: RidgeRunnerConfig,
    ep: Option<Episode>,
}

impl RidgeRunnerState {
    pub fn observation(&self) -> Vec<f64> {
        let mut obs = vec![self.vx, self.vh, self.h, self.pitch];
        obs.extend_from_slice(&self.joints);
        obs.extend_from_slice(&self.sensors);
        obs
    }

    /// Info-level stuck flag: the trailing window sums negative.
    pub fn stuck(&self) -> bool {
        self.recent_rewards.stuck_reward() < 0.0
    }
}

impl RidgeRunner {
    pub fn new(config: RidgeRunnerConfig) -> Result<Self> {
        validate_prob("stop probability", config.stop_prob)?;
        validate_prob("gap probability", config.gap_prob)?;
        if config.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        if !(config.track_length > 0.0) {
            return Err(Error::Config("track length must be positive".into()));
        }
        Ok(Self { config, ep: None })
    }

    pub fn config(&self) -> &RidgeRunnerConfig {
        &self.config
    }

    pub fn state(&self) -> Option<&RidgeRunnerState> {
        self.ep.as_ref().map(|e| &e.state)
    }

    fn terrain(obstacles: &[Obstacle], x: f64) -> Terrain {
        obstacles
            .iter()
            .find(|o| x >= o.start && x < o.end)
            .map_or(Terrain::Flat, |o| o.kind)
    }

    fn sense(obstacles: &[Obstacle], x: f64) -> [f64; 4] {
        SENSOR_OFFSETS.map(|d| match Self::terrain(obstacles, x + d) {
            Terrain::Flat => 0.0,
            Terrain::Block => 1.0,
            Terrain::Gap => -1.0,
        })
    }

    fn info_of(ep: &Episode) -> StepInfo {
        let sr = ep.state.recent_rewards.stuck_reward();
        StepInfo {
            bomb_present: false,
            bomb_center: None,
            stuck: sr < 0.0,
            stuck_reward: sr,
            trial: ep.trial,
        }
    }

    /// Replaces the episode's terrain with a single obstacle (scripted probes).
    pub fn set_single_obstacle(&mut self, start: f64, block: bool) -> Result<()> {
        let c = &self.config;
        let Some(ep) = self.ep.as_mut() else {
            return Err(Error::Usage("set_single_obstacle called before reset".into()));
        };
        let (kind, width) = if block { (Terrain::Block, c.block_width) } else { (Terrain::Gap, c.gap_width) };
        ep.obstacles = vec![Obstacle {
            start,
            end: start + width,
            kind,
        }];
        ep.trial = TrialKind::Stop;
        ep.state.sensors = Self::sense(&ep.obstacles, ep.state.x);
        Ok(())
    }
}

impl Environment for RidgeRunner {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            name: "runner".into(),
            obs_dim: RUNNER_OBS_DIM,
            act_dim: 4,
            max_steps: self.config.max_steps,
        }
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let c = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hardcore = rng.gen::<f64>() < c.stop_prob;
        let mut obstacles = Vec::new();
        if hardcore {
            let mut x = c.start_pad * c.track_length;
            while x < c.track_length - 1.0 {
                let (kind, width) = if rng.gen::<f64>() < c.gap_prob {
                    (Terrain::Gap, c.gap_width)
                } else {
                    (Terrain::Block, c.block_width)
                };
                obstacles.push(Obstacle {
                    start: x,
                    end: x + width,
                    kind,
                });
                x += width + rng.gen_range(c.spacing.0..=c.spacing.1);
            }
        }
        let mut joints = [0.0; 4];
        for j in &mut joints {
            *j = rng.gen_range(-0.05..=0.05);
        }
        let state = RidgeRunnerState {
            x: 0.0,
            vx: 0.0,
            h: 0.0,
            vh: 0.0,
            pitch: 0.0,
            joints,
            sensors: Self::sense(&obstacles, 0.0),
            recent_rewards: StuckWindow::default(),
        };
        let obs = state.observation();
        self.ep = Some(Episode {
            state,
            trial: if hardcore { TrialKind::Stop } else { TrialKind::Go },
            obstacles,
            steps: 0,
            done: false,
        });
        Ok(obs)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let a = check_action(action, 4)?;
        let c = self.config.clone();
        let Some(mut ep) = self.ep.take() else {
            return Err(Error::Usage("step called before reset".into()));
        };
        if ep.done {
            self.ep = Some(ep);
            return Err(Error::Usage("step called after the episode ended".into()));
        }
        ep.steps += 1;
        let s = &mut ep.state;
        let ground_at = |obs: &[Obstacle], x: f64| match Self::terrain(obs, x) {
            Terrain::Flat => Some(0.0),
            Terrain::Block => Some(c.block_height),
            Terrain::Gap => None,
        };
        let grounded = ground_at(&ep.obstacles, s.x).is_some_and(|g| s.h <= g + 1e-9);

        for (j, &u) in s.joints.iter_mut().zip(&a) {
            *j += 0.5 * (u - *j);
        }
        s.pitch += 0.3 * (0.4 * (s.joints[0] - s.joints[2]) - s.pitch);

        if grounded {
            let drive = 0.5 * (a[0] + a[2]);
            s.vx = (s.vx + 2.0 * (drive - s.vx) * c.dt).clamp(-1.0, 1.0);
            if s.joints[1] > 0.5 && s.joints[3] > 0.5 {
                s.vh = c.jump_speed;
            } else {
                s.vh = 0.0;
            }
        }
        if !grounded || s.vh > 0.0 {
            s.vh -= c.gravity * c.dt;
        }

        let x0 = s.x;
        let mut x1 = x0 + s.vx * c.dt;
        let h1 = s.h + s.vh * c.dt;
        // blocks are walls for a hull below their top
        if x1 > x0 {
            if let Some(o) = ep
                .obstacles
                .iter()
                .find(|o| o.kind == Terrain::Block && x0 < o.start && x1 >= o.start)
            {
                if h1 < c.block_height {
                    x1 = o.start - 1e-6;
                    s.vx = 0.0;
                }
            }
        }
        s.x = x1;
        s.h = h1;
        let mut fell = false;
        match ground_at(&ep.obstacles, s.x) {
            Some(g) if s.h <= g => {
                s.h = g;
                s.vh = 0.0;
            }
            Some(_) => {}
            None => fell = s.h <= 0.0,
        }
        s.sensors = Self::sense(&ep.obstacles, s.x);

        let progress = c.progress_reward * (s.x - x0) / c.track_length;
        let torque = -c.torque_cost * a.iter().map(|u| u.abs()).sum::<f64>();
        let mut comp = RewardComponents {
            base: progress + torque,
            ..Default::default()
        };
        s.recent_rewards.push(comp.base);
        let sr = s.recent_rewards.stuck_reward();
        if c.stuck_in_reward {
            comp.stuck = sr;
        }
        let mut cause = Cause::Running;
        if fell {
            cause = Cause::Fell;
            if c.fall_penalty {
                comp.fall = -100.0;
            }
        } else if s.x >= c.track_length {
            cause = Cause::Finished;
        } else if ep.steps >= c.max_steps {
            cause = Cause::Timeout;
        }
        ep.done = cause != Cause::Running;
        let result = StepResult {
            obs: ep.state.observation(),
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
