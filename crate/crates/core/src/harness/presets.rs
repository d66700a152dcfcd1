//! Named experiment configurations. The full-size presets carry the common
//! hyperparameters (lr 5e-4, γ 0.99, τ 1e-3, target entropy −3, 256-unit
//! layers, 1e6 replay); the `-desk` variants shrink networks, replay and
//! budgets to run on a single CPU core in minutes.

use super::config::{Algo, Inhibition, RuleKind, Shaping, TrainConfig};
use crate::envs::EnvKind;
use crate::error::{Error, Result};

pub const PRESETS: [&str; 14] = [
    "lander-baseline",
    "lander-bomb-retrain",
    "lander-scratch",
    "lander-ablation",
    "runner-baseline",
    "runner-hardcore",
    "runner-mixed",
    "stopgo",
    "lander-baseline-desk",
    "lander-bomb-retrain-desk",
    "lander-scratch-desk",
    "runner-baseline-desk",
    "runner-mixed-desk",
    "stopgo-desk",
];

fn lander(algo: Algo, bomb_freq: f64) -> TrainConfig {
    let mut c = TrainConfig::default();
    c.run.algo = algo;
    c.run.episodes = 2000;
    c.run.batch_size = 64;
    c.env.kind = EnvKind::Lander;
    c.env.bomb_freq = bomb_freq;
    c.sac.hidden = vec![256];
    c
}

fn runner(algo: Algo, stop_prob: f64) -> TrainConfig {
    let mut c = TrainConfig::default();
    c.run.algo = algo;
    c.run.episodes = 5000;
    c.run.batch_size = 128;
    c.env.kind = EnvKind::Runner;
    c.env.stop_prob = stop_prob;
    c.sac.hidden = vec![256, 256];
    c.saci.rule = Some(RuleKind::Stuck);
    c.saci.load_twin_i = true;
    c
}

/// Single-core scale: smaller networks and replay, a step budget instead of
/// an episode budget.
fn desk(mut c: TrainConfig, hidden: Vec<usize>, steps: usize, max_steps: usize) -> TrainConfig {
    c.sac.hidden = hidden;
    c.run.episodes = 100_000;
    c.run.max_total_steps = Some(steps);
    c.run.replay_capacity = 100_000;
    c.env.max_steps = Some(max_steps);
    c
}

fn desk_runner(c: TrainConfig, steps: Option<usize>) -> TrainConfig {
    let mut c = desk(c, vec![32, 32], 0, 150);
    c.run.max_total_steps = steps;
    c.run.batch_size = 64;
    c.env.track_length = Some(4.0);
    c
}

pub fn preset(name: &str) -> Result<TrainConfig> {
    let c = match name {
        // go-trial-only pretraining of the agent later retrained with bombs
        "lander-baseline" => lander(Algo::Sac, 0.0),
        "lander-bomb-retrain" => {
            let mut c = lander(Algo::Saci, 0.5);
            c.saci.load = Some("lander-baseline/checkpoint.bin".into());
            c
        }
        "lander-scratch" => lander(Algo::Saci, 0.5),
        // vanilla SAC-I; the sweep's ablation axis toggles the two flags
        "lander-ablation" => {
            let mut c = lander(Algo::Saci, 0.5);
            c.saci.episodic_memory = false;
            c.saci.dual_alpha = false;
            c
        }
        "runner-baseline" => {
            let mut c = runner(Algo::Sac, 0.0);
            c.run.episodes = 3000;
            c
        }
        "runner-hardcore" => {
            let mut c = runner(Algo::Saci, 1.0);
            c.saci.inhibition = Inhibition::SoftModulator;
            c.saci.warmup_episodes = 100;
            c.saci.load = Some("runner-baseline/checkpoint.bin".into());
            c
        }
        "runner-mixed" => {
            let mut c = runner(Algo::Saci, 0.9);
            c.saci.load = Some("runner-baseline/checkpoint.bin".into());
            c
        }
        "stopgo" => {
            let mut c = TrainConfig::default();
            c.run.episodes = 1000;
            c.run.max_total_steps = Some(30_000);
            c.env.kind = EnvKind::Stopgo;
            c.env.bomb_freq = 0.5;
            c.env.max_steps = Some(200);
            c.saci.shaping = Shaping::Proxy;
            c.sac.hidden = vec![256];
            c
        }
        "lander-baseline-desk" => desk(preset("lander-baseline")?, vec![64], 120_000, 400),
        "lander-bomb-retrain-desk" => {
            let mut c = desk(preset("lander-bomb-retrain")?, vec![64], 100_000, 400);
            c.saci.load = Some("lander-baseline-desk/checkpoint.bin".into());
            c
        }
        "lander-scratch-desk" => desk(preset("lander-scratch")?, vec![64], 100_000, 400),
        "runner-baseline-desk" => desk_runner(preset("runner-baseline")?, Some(20_000)),
        // episode budget: the mixed comparison is defined per episode
        "runner-mixed-desk" => {
            let mut c = desk_runner(preset("runner-mixed")?, None);
            c.run.episodes = 3000;
            c.saci.load = Some("runner-baseline-desk/checkpoint.bin".into());
            c
        }
        "stopgo-desk" => {
            let mut c = preset("stopgo")?;
            c.sac.hidden = vec![64];
            c.run.replay_capacity = 100_000;
            c
        }
        other => {
            return Err(Error::Usage(format!(
                "unknown preset {other:?}; known: {}",
                PRESETS.join(", ")
            )))
        }
    };
    c.validate()?;
    Ok(c)
}
