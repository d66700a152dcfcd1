use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{Algo, TrainConfig};
use super::rewards::transition_rewards;
use super::seeding::Streams;
use crate::checkpoint::Checkpoint;
use crate::envs::{Cause, EnvKind, Environment, StepResult, TraceWriter, TrialKind};
use crate::error::{Error, Result};
use crate::replay::{Branch, RingBuffer, Transition};
use crate::sac::{SacAgent, SacConfig};
use crate::saci::{classify_state, saci_update_step, InhibitoryPolicy, Memory, SaciAgent};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const AVG_WINDOW: usize = 100;

/// One row per finished episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// Environment steps taken so far in the run.
    pub step: usize,
    pub episode: usize,
    pub episode_steps: usize,
    pub trial: TrialKind,
    /// Raw episode reward, penalties included.
    pub reward: f64,
    pub avg100: f64,
    pub alpha_r: f64,
    pub alpha_i: Option<f64>,
    pub q_r: Option<f64>,
    pub q_i: Option<f64>,
    pub pi: Option<f64>,
    pub alpha_r_loss: Option<f64>,
    pub alpha_i_loss: Option<f64>,
    pub fill_r: usize,
    pub fill_i: usize,
    pub cause: Cause,
    pub success: bool,
    pub n_landed: usize,
    pub n_crashed: usize,
    pub n_hit_bomb: usize,
    pub n_fell: usize,
    pub n_finished: usize,
    pub n_timeout: usize,
}

/// Mean of the trailing `AVG_WINDOW` values (all of them when fewer exist).
pub fn windowed_mean(rewards: &[f64]) -> f64 {
    let tail = &rewards[rewards.len().saturating_sub(AVG_WINDOW)..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// The episode ending that counts as completing the task.
pub fn success_cause(env: EnvKind) -> Cause {
    match env {
        EnvKind::Lander => Cause::Landed,
        EnvKind::Runner | EnvKind::Stopgo => Cause::Finished,
    }
}

pub fn write_metrics<W: Write>(out: W, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics<R: Read>(input: R) -> Result<Vec<MetricsRecord>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(csv_err))
        .collect()
}

pub fn load_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    read_metrics(fs::File::open(path)?)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("metrics file: {e}"))
}

/// Policy produced by a run, with enough structure to act and checkpoint.
#[derive(Clone, Debug)]
pub enum TrainedAgent {
    Sac(SacAgent),
    Saci(SaciAgent),
}

impl TrainedAgent {
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        match self {
            TrainedAgent::Sac(a) => a.act(obs, rng),
            TrainedAgent::Saci(a) => a.act(obs, rng),
        }
    }

    pub fn act_deterministic(&self, obs: &[f64]) -> Result<Vec<f64>> {
        match self {
            TrainedAgent::Sac(a) => a.act_deterministic(obs),
            TrainedAgent::Saci(a) => a.act_deterministic(obs),
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            TrainedAgent::Sac(a) => a.policy.obs_dim(),
            TrainedAgent::Saci(a) => a.obs_dim(),
        }
    }

    pub fn act_dim(&self) -> usize {
        match self {
            TrainedAgent::Sac(a) => a.policy.act_dim(),
            TrainedAgent::Saci(a) => a.act_dim(),
        }
    }

    pub fn to_checkpoint(&self, config: &TrainConfig) -> Checkpoint {
        let text = config.to_toml();
        match self {
            TrainedAgent::Sac(a) => a.to_checkpoint(&text),
            TrainedAgent::Saci(a) => a.to_checkpoint(&text),
        }
    }

    /// Rebuilds the agent a run saved; the embedded config says which kind.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, TrainConfig)> {
        let config = TrainConfig::from_toml(&ck.config)?;
        let agent = match config.run.algo {
            Algo::Sac => TrainedAgent::Sac(SacAgent::from_tensors(ck, "", config.sac.clone())?),
            Algo::Saci => {
                let ip = config
                    .saci
                    .inhibition
                    .inhibitor_mode()
                    .map(|m| (m, config.saci.warmup_episodes, inhibitor_sac_config(&config)));
                TrainedAgent::Saci(SaciAgent::from_checkpoint(ck, config.saci_config(), ip)?)
            }
        };
        Ok((agent, config))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, TrainConfig)> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// `π_I` shares the common hyperparameters, target entropy included.
fn inhibitor_sac_config(config: &TrainConfig) -> SacConfig {
    config.sac.clone()
}

enum Learner {
    Sac { agent: SacAgent, buffer: RingBuffer },
    Saci { agent: SaciAgent, memory: Memory },
}

#[derive(Default)]
struct EpisodeStats {
    sums: [f64; 6],
    counts: [usize; 6],
}

impl EpisodeStats {
    fn add(&mut self, slot: usize, v: Option<f64>) {
        if let Some(v) = v {
            self.sums[slot] += v;
            self.counts[slot] += 1;
        }
    }

    fn mean(&self, slot: usize) -> Option<f64> {
        (self.counts[slot] > 0).then(|| self.sums[slot] / self.counts[slot] as f64)
    }
}

/// Everything a training run produces.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub records: Vec<MetricsRecord>,
    pub agent: TrainedAgent,
    pub total_steps: usize,
    pub checkpoints: Vec<PathBuf>,
}

fn build_learner(config: &TrainConfig, obs_dim: usize, act_dim: usize, streams: &mut Streams) -> Result<Learner> {
    let cap = config.run.replay_capacity;
    let load = match &config.saci.load {
        Some(p) => Some(Checkpoint::load(p)?),
        None => None,
    };
    Ok(match config.run.algo {
        Algo::Sac => {
            let mut agent = SacAgent::new(obs_dim, act_dim, config.sac.clone(), &mut streams.init)?;
            if let Some(ck) = &load {
                let mut tmp = SaciAgent::new(obs_dim, act_dim, config.saci_config(), &mut streams.init)?;
                tmp.retrain_from(ck, false)?;
                agent.policy = tmp.policy;
                agent.twin = tmp.twin_r;
                agent.temp = tmp.temp_r;
            }
            Learner::Sac {
                agent,
                buffer: RingBuffer::new(cap, obs_dim, act_dim)?,
            }
        }
        Algo::Saci => {
            let mut agent = SaciAgent::new(obs_dim, act_dim, config.saci_config(), &mut streams.init)?;
            if let Some(ck) = &load {
                agent.retrain_from(ck, config.saci.load_twin_i)?;
            }
            if let Some(mode) = config.saci.inhibition.inhibitor_mode() {
                let ip = InhibitoryPolicy::new(
                    obs_dim,
                    mode,
                    inhibitor_sac_config(config),
                    config.saci.warmup_episodes,
                    &mut streams.init,
                )?;
                agent = agent.with_inhibitor(ip);
            }
            Learner::Saci {
                agent,
                memory: Memory::new(config.saci.episodic_memory, cap, obs_dim, act_dim)?,
            }
        }
    })
}

/// Runs the configured experiment: one gradient step per environment step,
/// a metrics row per episode, checkpoints on schedule and at the end. With
/// `out_dir`, writes `metrics.csv`, `checkpoint.bin` and `checkpoint_ep{N}.bin`.
pub fn run_training(config: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let env = config.env.build()?;
    run_training_with(config, env, out_dir)
}

/// [`run_training`] on a caller-supplied environment (e.g. a remote one).
pub fn run_training_with<E: Environment>(config: &TrainConfig, mut env: E, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    config.validate()?;
    if let Some(d) = out_dir {
        fs::create_dir_all(d)?;
    }
    let spec = env.spec();
    let mut streams = Streams::new(config.run.seed);
    let mut learner = build_learner(config, spec.obs_dim, spec.act_dim, &mut streams)?;
    let rule = config.rule().build();
    let (kind, shaping) = (config.env.kind, config.saci.shaping);
    let batch = config.run.batch_size;
    let step_cap = config.run.max_total_steps.unwrap_or(usize::MAX);
    let success = success_cause(kind);

    let mut records = Vec::with_capacity(config.run.episodes);
    let mut rewards = Vec::with_capacity(config.run.episodes);
    let mut tally: BTreeMap<Cause, usize> = BTreeMap::new();
    let mut checkpoints = Vec::new();
    let mut total_steps = 0usize;

    for episode in 0..config.run.episodes {
        if total_steps >= step_cap {
            break;
        }
        let mut obs = env.reset(streams.env.gen())?;
        let mut info = env.info();
        let mut stats = EpisodeStats::default();
        let (mut ep_reward, mut ep_steps) = (0.0, 0usize);
        let last: StepResult = loop {
            let res = match &mut learner {
                Learner::Sac { agent, buffer } => {
                    let action = agent.act(&obs, &mut streams.act)?;
                    let fires = rule.classify(&obs, &info) == Branch::I;
                    let res = env.step(&action)?;
                    let r = transition_rewards(kind, shaping, fires, &res, None);
                    buffer.push(&Transition {
                        state: obs.clone(),
                        action,
                        branch: Branch::R,
                        reward: r.sac,
                        reward_raw: res.reward_raw,
                        inhibitor_action: 0.0,
                        next_state: res.obs.clone(),
                        done: res.terminal(),
                    })?;
                    if let Some(sb) = buffer.sample(batch, &mut streams.sampler)? {
                        let m = agent.update(&sb.batch, &mut streams.update)?;
                        stats.add(0, Some(m.q_loss));
                        stats.add(2, Some(m.policy_loss));
                        stats.add(3, Some(m.alpha_loss));
                    }
                    res
                }
                Learner::Saci { agent, memory } => {
                    let action = agent.act(&obs, &mut streams.act)?;
                    let inhibitor = match &agent.inhibitor {
                        Some(ip) => Some((ip.mode, ip.act(&obs, &mut streams.inhibitor)?)),
                        None => None,
                    };
                    let c = classify_state(rule.as_ref(), inhibitor, &obs, &info);
                    let res = env.step(&action)?;
                    let r = transition_rewards(kind, shaping, c.branch == Branch::I, &res, c.weight);
                    memory.push(&Transition {
                        state: obs.clone(),
                        action,
                        branch: c.branch,
                        reward: match c.branch {
                            Branch::R => r.regular,
                            Branch::I => r.inhibitory,
                        },
                        reward_raw: res.reward_raw,
                        inhibitor_action: c.inhibitor_action,
                        next_state: res.obs.clone(),
                        done: res.terminal(),
                    })?;
                    let m = saci_update_step(agent, memory, batch, episode, &mut streams.sampler, &mut streams.update)?;
                    if let Some(m) = m {
                        stats.add(0, m.q_r);
                        stats.add(1, m.q_i);
                        stats.add(2, Some(m.policy_loss));
                        stats.add(3, m.alpha_r_loss);
                        stats.add(4, m.alpha_i_loss);
                    }
                    res
                }
            };
            total_steps += 1;
            ep_steps += 1;
            ep_reward += res.reward_raw;
            if res.done || total_steps >= step_cap {
                break res;
            }
            obs = res.obs;
            info = res.info;
        };

        rewards.push(ep_reward);
        *tally.entry(last.cause).or_default() += 1;
        let (alpha_r, alpha_i, (fill_r, fill_i)) = match &learner {
            Learner::Sac { agent, buffer } => (agent.temp.alpha(), None, (buffer.len(), 0)),
            Learner::Saci { agent, memory } => (
                agent.alpha(Branch::R),
                Some(agent.alpha(Branch::I)),
                memory.fills(),
            ),
        };
        let n = |c: Cause| tally.get(&c).copied().unwrap_or(0);
        records.push(MetricsRecord {
            step: total_steps,
            episode: episode + 1,
            episode_steps: ep_steps,
            trial: last.info.trial,
            reward: ep_reward,
            avg100: windowed_mean(&rewards),
            alpha_r,
            alpha_i,
            q_r: stats.mean(0),
            q_i: stats.mean(1),
            pi: stats.mean(2),
            alpha_r_loss: stats.mean(3),
            alpha_i_loss: stats.mean(4),
            fill_r,
            fill_i,
            cause: last.cause,
            success: last.cause == success,
            n_landed: n(Cause::Landed),
            n_crashed: n(Cause::Crashed),
            n_hit_bomb: n(Cause::HitBomb),
            n_fell: n(Cause::Fell),
            n_finished: n(Cause::Finished),
            n_timeout: n(Cause::Timeout),
        });

        if let (Some(d), Some(every)) = (out_dir, config.run.checkpoint_every) {
            if (episode + 1) % every == 0 {
                let path = d.join(format!("checkpoint_ep{}.bin", episode + 1));
                snapshot(&learner).to_checkpoint(config).save(&path)?;
                checkpoints.push(path);
            }
        }
    }

    let agent = snapshot(&learner);
    if let Some(d) = out_dir {
        let path = d.join(CHECKPOINT_FILE);
        agent.to_checkpoint(config).save(&path)?;
        checkpoints.push(path);
        write_metrics(fs::File::create(d.join(METRICS_FILE))?, &records)?;
    }
    Ok(TrainOutcome {
        records,
        agent,
        total_steps,
        checkpoints,
    })
}

fn snapshot(learner: &Learner) -> TrainedAgent {
    match learner {
        Learner::Sac { agent, .. } => TrainedAgent::Sac(agent.clone()),
        Learner::Saci { agent, .. } => TrainedAgent::Saci(agent.clone()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_reward: f64,
    /// Population standard deviation of the episode rewards.
    pub std_reward: f64,
    pub success_rate: f64,
    pub causes: BTreeMap<Cause, usize>,
    pub rewards: Vec<f64>,
    pub trials: Vec<TrialKind>,
    pub outcomes: Vec<Cause>,
}

/// Runs `n_episodes` with the deterministic (mode) action and no learning.
/// Episode seeds come from `seed`'s environment stream.
pub fn evaluate<E: Environment + ?Sized>(
    agent: &TrainedAgent,
    env: &mut E,
    success: Cause,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalSummary> {
    evaluate_traced(agent, env, success, n_episodes, seed, None::<&mut Vec<u8>>)
}

/// [`evaluate`], also writing every step of every episode as trace CSV.
pub fn evaluate_traced<E: Environment + ?Sized, W: Write>(
    agent: &TrainedAgent,
    env: &mut E,
    success: Cause,
    n_episodes: usize,
    seed: u64,
    trace: Option<W>,
) -> Result<EvalSummary> {
    if n_episodes == 0 {
        return Err(Error::Usage("evaluation needs at least one episode".into()));
    }
    let spec = env.spec();
    if spec.obs_dim != agent.obs_dim() || spec.act_dim != agent.act_dim() {
        return Err(Error::Shape(format!(
            "agent expects obs/act dims {}/{}, environment has {}/{}",
            agent.obs_dim(),
            agent.act_dim(),
            spec.obs_dim,
            spec.act_dim
        )));
    }
    let mut trace = match trace {
        Some(w) => Some(TraceWriter::new(w, spec.obs_dim, spec.act_dim)?),
        None => None,
    };
    let mut seeds = Streams::new(seed).env;
    let mut rewards = Vec::with_capacity(n_episodes);
    let mut trials = Vec::with_capacity(n_episodes);
    let mut outcomes = Vec::with_capacity(n_episodes);
    let mut causes = BTreeMap::new();
    for _ in 0..n_episodes {
        let mut obs = env.reset(seeds.gen())?;
        let mut total = 0.0;
        let last = loop {
            let action = agent.act_deterministic(&obs)?;
            let res = env.step(&action)?;
            if let Some(t) = trace.as_mut() {
                t.record(&obs, &action, &res)?;
            }
            total += res.reward_raw;
            if res.done {
                break res;
            }
            obs = res.obs;
        };
        *causes.entry(last.cause).or_insert(0) += 1;
        rewards.push(total);
        trials.push(last.info.trial);
        outcomes.push(last.cause);
    }
    let n = n_episodes as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok(EvalSummary {
        episodes: n_episodes,
        mean_reward: mean,
        std_reward: var.sqrt(),
        success_rate: causes.get(&success).copied().unwrap_or(0) as f64 / n,
        causes,
        rewards,
        trials,
        outcomes,
    })
}
