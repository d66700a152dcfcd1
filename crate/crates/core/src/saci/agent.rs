use rand::Rng;
use serde::{Deserialize, Serialize};

use super::inhibitory::{inhibitory_policy_update, InhibitorMode, InhibitoryPolicy};
use super::memory::Memory;
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::replay::{Branch, BranchBatches};
use crate::sac::{
    critic_step, normal_matrix, policy_update, soft_update_targets, CriticStep, GaussianPolicy, PolicyTerm, SacAgent,
    SacConfig, SacMetrics, Temperature, TwinQ,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaciConfig {
    pub sac: SacConfig,
    /// Partitioned replay per branch; off shares one buffer.
    pub episodic_memory: bool,
    /// Separate temperatures per branch; off shares `α_R`.
    pub dual_alpha: bool,
}

impl Default for SaciConfig {
    fn default() -> Self {
        Self {
            sac: SacConfig::default(),
            episodic_memory: true,
            dual_alpha: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SaciMetrics {
    pub q_r: Option<f64>,
    pub q_i: Option<f64>,
    pub policy_loss: f64,
    pub alpha_r_loss: Option<f64>,
    pub alpha_i_loss: Option<f64>,
    pub alpha_r: f64,
    pub alpha_i: f64,
    pub entropy_r: Option<f64>,
    pub entropy_i: Option<f64>,
    pub inhibitor: Option<SacMetrics>,
}

/// SAC with inhibitory networks: one shared policy evaluated by a regular and
/// an inhibitory twin critic, each with its own temperature.
#[derive(Clone, Debug)]
pub struct SaciAgent {
    pub policy: GaussianPolicy,
    pub twin_r: TwinQ,
    pub twin_i: TwinQ,
    pub temp_r: Temperature,
    pub temp_i: Temperature,
    pub inhibitor: Option<InhibitoryPolicy>,
    pub config: SaciConfig,
}

fn mean_entropy(log_probs: &[f64]) -> f64 {
    -log_probs.iter().sum::<f64>() / log_probs.len() as f64
}

impl SaciAgent {
    /// Initialization order: policy, regular twin, inhibitory twin — the first
    /// two match [`SacAgent::new`] draw for draw.
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, config: SaciConfig, rng: &mut R) -> Result<Self> {
        config.sac.validate()?;
        let h = &config.sac.hidden;
        let policy = GaussianPolicy::new(obs_dim, act_dim, h, rng)?;
        let twin_r = TwinQ::new(obs_dim, act_dim, h, rng)?;
        let twin_i = TwinQ::new(obs_dim, act_dim, h, rng)?;
        let t = |c: &SacConfig| Temperature::new(c.init_log_alpha, c.target_entropy);
        Ok(Self {
            temp_r: t(&config.sac),
            temp_i: t(&config.sac),
            policy,
            twin_r,
            twin_i,
            inhibitor: None,
            config,
        })
    }

    pub fn with_inhibitor(mut self, ip: InhibitoryPolicy) -> Self {
        self.inhibitor = Some(ip);
        self
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.obs_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.policy.act_dim()
    }

    /// Temperature in effect for branch `k`.
    pub fn alpha(&self, k: Branch) -> f64 {
        match (k, self.config.dual_alpha) {
            (Branch::I, true) => self.temp_i.alpha(),
            _ => self.temp_r.alpha(),
        }
    }

    pub fn twin(&self, k: Branch) -> &TwinQ {
        match k {
            Branch::R => &self.twin_r,
            Branch::I => &self.twin_i,
        }
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let noise = normal_matrix(rng, 1, self.act_dim());
        Ok(self.policy.sample_action(state, noise.row(0))?.0)
    }

    pub fn act_deterministic(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.policy.mode(state)
    }

    /// One gradient block: for each branch with a batch, both critics, its
    /// temperature and its targets; then the shared policy on the sum of the
    /// branch terms. `None` when no branch has a batch.
    pub fn update<R: Rng + ?Sized>(&mut self, batches: &BranchBatches, rng: &mut R) -> Result<Option<SaciMetrics>> {
        if batches.is_empty() {
            return Ok(None);
        }
        let c = self.config.sac.clone();
        let dual = self.config.dual_alpha;
        let mut m = SaciMetrics::default();
        let mut steps: [Option<CriticStep>; 2] = [None, None];
        for (slot, k) in Branch::BOTH.into_iter().enumerate() {
            let Some(sb) = batches.get(k) else { continue };
            sb.batch.validate()?;
            let alpha = self.alpha(k);
            let twin = match k {
                Branch::R => &mut self.twin_r,
                Branch::I => &mut self.twin_i,
            };
            let cs = critic_step(&self.policy, twin, alpha, &sb.batch, c.gamma, c.lr, rng)?;
            if dual {
                let temp = match k {
                    Branch::R => &mut self.temp_r,
                    Branch::I => &mut self.temp_i,
                };
                let l = temp.update(&cs.sample.log_probs, c.lr)?;
                match k {
                    Branch::R => m.alpha_r_loss = l,
                    Branch::I => m.alpha_i_loss = l,
                }
            }
            soft_update_targets(twin, c.tau)?;
            let ent = Some(mean_entropy(&cs.sample.log_probs));
            match k {
                Branch::R => (m.q_r, m.entropy_r) = (Some(cs.q_loss), ent),
                Branch::I => (m.q_i, m.entropy_i) = (Some(cs.q_loss), ent),
            }
            steps[slot] = Some(cs);
        }
        if !dual {
            let lp: Vec<f64> = steps.iter().flatten().flat_map(|s| s.sample.log_probs.iter().copied()).collect();
            m.alpha_r_loss = self.temp_r.update(&lp, c.lr)?;
        }
        let alphas = [self.alpha(Branch::R), self.alpha(Branch::I)];
        let mut terms = Vec::with_capacity(2);
        for (slot, k) in Branch::BOTH.into_iter().enumerate() {
            if let (Some(cs), Some(sb)) = (&steps[slot], batches.get(k)) {
                terms.push(PolicyTerm {
                    twin: match k {
                        Branch::R => &self.twin_r,
                        Branch::I => &self.twin_i,
                    },
                    states: &sb.batch.states,
                    sample: &cs.sample,
                    alpha: alphas[slot],
                });
            }
        }
        m.policy_loss = policy_update(&mut self.policy, &terms, c.lr)?;
        m.alpha_r = self.alpha(Branch::R);
        m.alpha_i = self.alpha(Branch::I);
        Ok(Some(m))
    }

    /// Writes `policy.*`, `twin_r.*`, `twin_i.*`, `log_alpha_r`, `log_alpha_i`
    /// and, when present, `pi_i.*`.
    pub fn to_checkpoint(&self, config_text: &str) -> Checkpoint {
        let mut ck = Checkpoint::new(config_text);
        ck.put_mlp("policy", &self.policy.net);
        self.twin_r.put_tensors(&mut ck, "twin_r.");
        self.twin_i.put_tensors(&mut ck, "twin_i.");
        ck.put_scalar("log_alpha_r", self.temp_r.log_alpha);
        ck.put_scalar("log_alpha_i", self.temp_i.log_alpha);
        if let Some(ip) = &self.inhibitor {
            ip.learner.put_tensors(&mut ck, "pi_i.");
        }
        ck
    }

    /// Restores a full SAC-I agent. `inhibitor` gives the mode, warmup and
    /// learner config of `π_I` when the checkpoint carries one.
    pub fn from_checkpoint(
        ck: &Checkpoint,
        config: SaciConfig,
        inhibitor: Option<(InhibitorMode, usize, SacConfig)>,
    ) -> Result<Self> {
        config.sac.validate()?;
        let policy = GaussianPolicy::from_net(ck.get_mlp("policy")?).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let t = |name: &str| -> Result<Temperature> {
            Ok(Temperature::new(ck.get_scalar(name)?, config.sac.target_entropy))
        };
        let mut agent = Self {
            twin_r: TwinQ::from_tensors(ck, "twin_r.")?,
            twin_i: TwinQ::from_tensors(ck, "twin_i.")?,
            temp_r: t("log_alpha_r")?,
            temp_i: t("log_alpha_i")?,
            policy,
            inhibitor: None,
            config: config.clone(),
        };
        agent.check_shapes()?;
        if let Some((mode, warmup, sc)) = inhibitor {
            agent.inhibitor = Some(InhibitoryPolicy {
                mode,
                learner: SacAgent::from_tensors(ck, "pi_i.", sc)?,
                warmup_episodes: warmup,
            });
        }
        Ok(agent)
    }

    fn check_shapes(&self) -> Result<()> {
        let want = self.policy.obs_dim() + self.policy.act_dim();
        if self.twin_r.input_dim() != want || !self.twin_r.q1.same_shape(&self.twin_i.q1) {
            return Err(Error::Checkpoint("critic shapes do not match the policy".into()));
        }
        Ok(())
    }

    /// Transfers the policy, regular twin (online and target) and `α_R` from a
    /// plain SAC or a SAC-I checkpoint. With `load_twin_i` the inhibitory twin
    /// is initialized from the same critics; otherwise it keeps its fresh
    /// weights. Optimizer moments restart and `α_I` is untouched.
    pub fn retrain_from(&mut self, ck: &Checkpoint, load_twin_i: bool) -> Result<()> {
        let (twin_prefix, alpha_name) = if ck.contains("twin_r.q1.w0") {
            ("twin_r.", "log_alpha_r")
        } else {
            ("", "log_alpha")
        };
        let policy = ck.get_mlp("policy")?;
        let twin = TwinQ::from_tensors(ck, twin_prefix)?;
        if !policy.same_shape(&self.policy.net) || !twin.q1.same_shape(&self.twin_r.q1) {
            return Err(Error::Checkpoint(format!(
                "checkpoint layer sizes {:?}/{:?} incompatible with agent {:?}/{:?}",
                policy.layer_sizes(),
                twin.q1.layer_sizes(),
                self.policy.net.layer_sizes(),
                self.twin_r.q1.layer_sizes()
            )));
        }
        self.policy = GaussianPolicy::from_net(policy)?;
        if load_twin_i {
            self.twin_i = TwinQ::from_parts(
                twin.q1.clone(),
                twin.q2.clone(),
                twin.q1_target.clone(),
                twin.q2_target.clone(),
            )?;
        }
        self.twin_r = twin;
        self.temp_r = Temperature::new(ck.get_scalar(alpha_name)?, self.config.sac.target_entropy);
        Ok(())
    }
}

/// Samples from `memory` with `sampler`, runs the agent's gradient block with
/// `update` supplying policy noise, then the `π_I` step when an inhibitory
/// policy is attached. `None` signals an underfilled replay (nothing was
/// updated).
pub fn saci_update_step<S: Rng + ?Sized, U: Rng + ?Sized>(
    agent: &mut SaciAgent,
    memory: &Memory,
    batch_size: usize,
    episodes_done: usize,
    sampler: &mut S,
    update: &mut U,
) -> Result<Option<SaciMetrics>> {
    let batches = memory.sample(batch_size, sampler)?;
    let Some(mut m) = agent.update(&batches, update)? else {
        return Ok(None);
    };
    if let Some(ip) = agent.inhibitor.as_mut() {
        m.inhibitor = inhibitory_policy_update(ip, memory, batch_size, episodes_done, sampler, update)?;
    }
    Ok(Some(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::{RingBuffer, Transition};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> SacConfig {
        SacConfig {
            hidden: vec![8],
            ..Default::default()
        }
    }

    fn random_transition(rng: &mut ChaCha8Rng, branch: Branch) -> Transition {
        Transition {
            state: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            action: (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            branch,
            reward: rng.gen_range(-1.0..1.0),
            reward_raw: 0.0,
            inhibitor_action: 0.0,
            next_state: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            done: rng.gen_bool(0.1),
        }
    }

    #[test]
    fn empty_inhibitory_branch_matches_plain_sac() {
        let mut init = ChaCha8Rng::seed_from_u64(4);
        let mut sac = SacAgent::new(3, 2, small(), &mut init).unwrap();
        let mut init = ChaCha8Rng::seed_from_u64(4);
        let cfg = SaciConfig {
            sac: small(),
            ..Default::default()
        };
        let mut saci = SaciAgent::new(3, 2, cfg, &mut init).unwrap();
        let mut data = ChaCha8Rng::seed_from_u64(8);
        let mut buf = RingBuffer::new(1000, 3, 2).unwrap();
        let mut mem = Memory::new(true, 1000, 3, 2).unwrap();
        for _ in 0..64 {
            let t = random_transition(&mut data, Branch::R);
            buf.push(&t).unwrap();
            mem.push(&t).unwrap();
        }
        let (mut sa, mut sb) = (ChaCha8Rng::seed_from_u64(1), ChaCha8Rng::seed_from_u64(1));
        let (mut ua, mut ub) = (ChaCha8Rng::seed_from_u64(9), ChaCha8Rng::seed_from_u64(9));
        for _ in 0..50 {
            let b = buf.sample(16, &mut sa).unwrap().unwrap();
            let ms = sac.update(&b.batch, &mut ua).unwrap();
            let mi = saci_update_step(&mut saci, &mem, 16, 0, &mut sb, &mut ub).unwrap().unwrap();
            assert_eq!(ms.alpha.to_bits(), mi.alpha_r.to_bits());
            assert_eq!(Some(ms.q_loss), mi.q_r);
            assert!(mi.q_i.is_none());
        }
        assert_eq!(sac.policy.net, saci.policy.net);
        assert_eq!(sac.twin.q1, saci.twin_r.q1);
        assert_eq!(sac.twin.q2_target, saci.twin_r.q2_target);
        assert_eq!(sac.temp.log_alpha.to_bits(), saci.temp_r.log_alpha.to_bits());
    }

    #[test]
    fn alpha_i_frozen_without_inhibitory_data_and_independent_of_alpha_r() {
        let cfg = SaciConfig {
            sac: small(),
            ..Default::default()
        };
        let mut a = SaciAgent::new(3, 2, cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut data = ChaCha8Rng::seed_from_u64(2);
        let mut mem = Memory::new(true, 100, 3, 2).unwrap();
        for _ in 0..32 {
            mem.push(&random_transition(&mut data, Branch::R)).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let li = a.temp_i.log_alpha;
        for _ in 0..10 {
            saci_update_step(&mut a, &mem, 8, 0, &mut rng, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        }
        assert_eq!(a.temp_i.log_alpha, li);
        assert_ne!(a.temp_r.log_alpha, 0.0);

        // perturbing α_I leaves the α_R step unchanged for fixed batches
        for _ in 0..32 {
            mem.push(&random_transition(&mut data, Branch::I)).unwrap();
        }
        let batches = mem.sample(8, &mut rng).unwrap();
        let mut b = a.clone();
        b.temp_i.log_alpha += 0.7;
        let (mut r1, mut r2) = (ChaCha8Rng::seed_from_u64(5), ChaCha8Rng::seed_from_u64(5));
        a.update(&batches, &mut r1).unwrap();
        b.update(&batches, &mut r2).unwrap();
        assert_eq!(a.temp_r.log_alpha.to_bits(), b.temp_r.log_alpha.to_bits());
        assert_eq!(a.twin_r.q1, b.twin_r.q1);
    }

    #[test]
    fn single_alpha_ties_both_branches() {
        let cfg = SaciConfig {
            sac: small(),
            dual_alpha: false,
            ..Default::default()
        };
        let mut a = SaciAgent::new(3, 2, cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut data = ChaCha8Rng::seed_from_u64(2);
        let mut mem = Memory::new(false, 100, 3, 2).unwrap();
        for k in 0..40 {
            let b = if k % 2 == 0 { Branch::R } else { Branch::I };
            mem.push(&random_transition(&mut data, b)).unwrap();
        }
        let m = saci_update_step(&mut a, &mem, 16, 0, &mut data, &mut ChaCha8Rng::seed_from_u64(4))
            .unwrap()
            .unwrap();
        assert_eq!(m.alpha_r, m.alpha_i);
        assert!(m.alpha_i_loss.is_none());
        assert_eq!(a.temp_i.log_alpha, 0.0);
    }

    #[test]
    fn underfilled_replay_signals_skip() {
        let mut a = SaciAgent::new(3, 2, SaciConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mem = Memory::new(true, 100, 3, 2).unwrap();
        assert!(saci_update_step(&mut a, &mem, 4, 0, &mut ChaCha8Rng::seed_from_u64(0), &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap()
            .is_none());
    }

    #[test]
    fn retrain_transfers_regular_branch_only() {
        let mut init = ChaCha8Rng::seed_from_u64(1);
        let base = SacAgent::new(3, 2, small(), &mut init).unwrap();
        let mut base = base;
        base.temp.log_alpha = -1.25;
        let ck = base.to_checkpoint("");
        let cfg = SaciConfig {
            sac: small(),
            ..Default::default()
        };
        let mut a = SaciAgent::new(3, 2, cfg.clone(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let fresh_i = a.twin_i.q1.clone();
        a.retrain_from(&ck, false).unwrap();
        assert_eq!(a.policy.net, base.policy.net);
        assert_eq!(a.twin_r.q2_target, base.twin.q2_target);
        assert_eq!(a.temp_r.log_alpha, -1.25);
        assert_eq!(a.twin_i.q1, fresh_i);
        assert_ne!(a.twin_i.q1, base.twin.q1);

        // transferred tensors survive a save unchanged
        let saved = a.to_checkpoint("");
        assert_eq!(saved.get("policy.w0"), ck.get("policy.w0"));
        assert_eq!(saved.get("twin_r.q1.b1"), ck.get("q1.b1"));

        let mut b = SaciAgent::new(3, 2, cfg.clone(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        b.retrain_from(&ck, true).unwrap();
        assert_eq!(b.twin_i.q1, base.twin.q1);
        assert_eq!(b.twin_i.q2, base.twin.q2);

        let wide = SaciConfig {
            sac: SacConfig {
                hidden: vec![16],
                ..Default::default()
            },
            ..Default::default()
        };
        let mut c = SaciAgent::new(3, 2, wide, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert!(matches!(c.retrain_from(&ck, false), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn checkpoint_round_trip_with_inhibitor() {
        let sc = small();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ip = InhibitoryPolicy::new(3, InhibitorMode::SoftModulator, sc.clone(), 100, &mut rng).unwrap();
        let cfg = SaciConfig {
            sac: sc.clone(),
            ..Default::default()
        };
        let a = SaciAgent::new(3, 2, cfg.clone(), &mut rng).unwrap().with_inhibitor(ip);
        let ck = a.to_checkpoint("x");
        assert!(ck.contains("twin_i.q2_target.w1") && ck.contains("pi_i.policy.w0") && ck.contains("log_alpha_i"));
        let back = SaciAgent::from_checkpoint(&ck, cfg, Some((InhibitorMode::SoftModulator, 100, sc))).unwrap();
        assert_eq!(back.to_checkpoint("x").to_bytes(), ck.to_bytes());
    }
}
