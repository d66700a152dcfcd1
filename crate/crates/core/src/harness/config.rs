use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::envs::{
    ConservativeBombRule, EnvConfig, EnvKind, InhibitionRule, NeverInhibit, ProximityBombRule, StopZoneRule,
    StuckRule,
};
use crate::error::{Error, Result};
use crate::sac::SacConfig;
use crate::saci::{InhibitorMode, SaciConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Sac,
    Saci,
}

impl FromStr for Algo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sac" => Ok(Algo::Sac),
            "saci" | "sac-i" => Ok(Algo::Saci),
            other => Err(Error::Usage(format!("unknown algorithm {other:?}"))),
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Sac => "sac",
            Algo::Saci => "saci",
        })
    }
}

/// Inhibitory reward shaping on top of the raw environment reward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shaping {
    None,
    /// Bomb-proximity field (lander) or zone-approach penalty (stop-go).
    Proxy,
    /// Landing-aware shaping relative to the bomb (lander only).
    Conservative,
}

/// Where branch labels come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inhibition {
    Rule,
    HardSwitch,
    SoftModulator,
}

impl Inhibition {
    pub fn inhibitor_mode(&self) -> Option<InhibitorMode> {
        match self {
            Inhibition::Rule => None,
            Inhibition::HardSwitch => Some(InhibitorMode::HardSwitch),
            Inhibition::SoftModulator => Some(InhibitorMode::SoftModulator),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Proximity,
    Conservative,
    StopZone,
    Stuck,
    Never,
}

impl RuleKind {
    pub fn build(&self) -> Box<dyn InhibitionRule + Send + Sync> {
        match self {
            RuleKind::Proximity => Box::new(ProximityBombRule),
            RuleKind::Conservative => Box::new(ConservativeBombRule),
            RuleKind::StopZone => Box::new(StopZoneRule),
            RuleKind::Stuck => Box::new(StuckRule),
            RuleKind::Never => Box::new(NeverInhibit),
        }
    }

    /// The rule paired with an environment and shaping when none is given.
    pub fn default_for(env: EnvKind, shaping: Shaping) -> Self {
        match (env, shaping) {
            (EnvKind::Lander, Shaping::Conservative) => RuleKind::Conservative,
            (EnvKind::Lander, _) => RuleKind::Proximity,
            (EnvKind::Stopgo, _) => RuleKind::StopZone,
            (EnvKind::Runner, _) => RuleKind::Stuck,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub algo: Algo,
    pub episodes: usize,
    /// Hard cap on environment steps across the run.
    pub max_total_steps: Option<usize>,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub seed: u64,
    /// Extra checkpoint every this many episodes.
    pub checkpoint_every: Option<usize>,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            algo: Algo::Saci,
            episodes: 2000,
            max_total_steps: None,
            batch_size: 64,
            replay_capacity: 1_000_000,
            seed: 0,
            checkpoint_every: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaciSettings {
    pub shaping: Shaping,
    pub inhibition: Inhibition,
    /// Defaults to the environment's natural rule.
    pub rule: Option<RuleKind>,
    pub episodic_memory: bool,
    pub dual_alpha: bool,
    /// Episodes before the learned inhibitory policy starts training.
    pub warmup_episodes: usize,
    /// Checkpoint whose weights initialize the agent.
    pub load: Option<PathBuf>,
    /// Also initialize the inhibitory critics from the loaded regular ones.
    pub load_twin_i: bool,
}

impl Default for SaciSettings {
    fn default() -> Self {
        Self {
            shaping: Shaping::Proxy,
            inhibition: Inhibition::Rule,
            rule: None,
            episodic_memory: true,
            dual_alpha: true,
            warmup_episodes: 0,
            load: None,
            load_twin_i: false,
        }
    }
}

/// Full training configuration; serializes to a sectioned `key = value` file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub run: RunSettings,
    pub env: EnvConfig,
    pub sac: SacConfig,
    pub saci: SaciSettings,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            run: RunSettings::default(),
            env: EnvConfig::default(),
            sac: SacConfig::default(),
            saci: SaciSettings::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.sac.validate()?;
        let r = &self.run;
        if r.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if r.replay_capacity < r.batch_size {
            return Err(Error::Config("replay_capacity must hold at least one batch".into()));
        }
        if r.checkpoint_every == Some(0) {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        for (name, p) in [("bomb_freq", self.env.bomb_freq), ("stop_prob", self.env.stop_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.saci.shaping == Shaping::Conservative && self.env.kind != EnvKind::Lander {
            return Err(Error::Config("conservative shaping is defined for the lander only".into()));
        }
        if self.saci.inhibition == Inhibition::SoftModulator && self.env.kind != EnvKind::Runner {
            return Err(Error::Config("the soft modulator scales the runner's stuck penalty only".into()));
        }
        Ok(())
    }

    pub fn rule(&self) -> RuleKind {
        self.saci
            .rule
            .unwrap_or_else(|| RuleKind::default_for(self.env.kind, self.saci.shaping))
    }

    pub fn saci_config(&self) -> SaciConfig {
        SaciConfig {
            sac: self.sac.clone(),
            episodic_memory: self.saci.episodic_memory,
            dual_alpha: self.saci.dual_alpha,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        super::presets::preset(name)
    }
}
