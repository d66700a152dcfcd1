//! Property tests for the invariants the training stack relies on.

use std::time::Duration;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use inhibitory_sac::bridge::{self, decode, encode, loopback_pair, Transport, WireMessage, PROTOCOL_VERSION};
use inhibitory_sac::checkpoint::Checkpoint;
use inhibitory_sac::envs::shaping::{StuckWindow, STUCK_WINDOW};
use inhibitory_sac::envs::{
    Cause, EnvConfig, EnvKind, InhibitionRule, NeverInhibit, RewardComponents, StepInfo, StopZoneRule, StuckRule,
};
use inhibitory_sac::harness::{stream, windowed_mean, StreamId, Streams, AVG_WINDOW};
use inhibitory_sac::numcore::Tensor;
use inhibitory_sac::sac::SacConfig;
use inhibitory_sac::saci::{Branch, Memory, SaciAgent, SaciConfig, Transition};

fn transition(i: usize, branch: Branch) -> Transition {
    let v = i as f64;
    Transition {
        state: vec![v, -v],
        action: vec![0.1 * v],
        branch,
        reward: v,
        reward_raw: -v,
        inhibitor_action: 0.0,
        next_state: vec![v + 1.0, -v - 1.0],
        done: i % 5 == 0,
    }
}

fn branch_of(b: bool) -> Branch {
    if b {
        Branch::I
    } else {
        Branch::R
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Every transition lands in exactly the buffer of its label, and the
    // sampled branch batches only ever contain their own branch.
    #[test]
    fn partition_is_exact(labels in prop::collection::vec(any::<bool>(), 1..300), capacity in 8usize..64, batch in 1usize..8) {
        for episodic in [true, false] {
            let mut m = Memory::new(episodic, capacity, 2, 1).unwrap();
            for (i, &l) in labels.iter().enumerate() {
                m.push(&transition(i, branch_of(l))).unwrap();
            }
            let (r, i) = m.fills();
            match &m {
                Memory::Partitioned(p) => {
                    let n_i = labels.iter().filter(|&&l| l).count();
                    prop_assert_eq!(i, n_i.min(capacity));
                    prop_assert_eq!(r, (labels.len() - n_i).min(capacity));
                    for k in Branch::BOTH {
                        prop_assert!(p.buffer(k).iter().all(|t| t.branch == k));
                    }
                }
                Memory::Shared(b) => {
                    prop_assert_eq!(r + i, labels.len().min(capacity));
                    prop_assert_eq!(b.len(), r + i);
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(labels.len() as u64);
            let batches = m.sample(batch, &mut rng).unwrap();
            for k in Branch::BOTH {
                if let Some(s) = batches.get(k) {
                    prop_assert!(s.branches.iter().all(|&b| b == k));
                    prop_assert_eq!(s.batch.len(), s.branches.len());
                }
            }
        }
    }

    // The stuck term is the negative part of the zero-padded sum of the last
    // six raw rewards.
    #[test]
    fn stuck_window_matches_naive_sum(rewards in prop::collection::vec(-5.0f64..5.0, 0..40)) {
        let mut w = StuckWindow::default();
        for (n, &r) in rewards.iter().enumerate() {
            w.push(r);
            let tail = &rewards[(n + 1).saturating_sub(STUCK_WINDOW)..=n];
            let s: f64 = tail.iter().sum();
            let want = if s < 0.0 { s } else { 0.0 };
            prop_assert!((w.stuck_reward() - want).abs() < 1e-12);
            prop_assert!(w.stuck_reward() <= 0.0);
        }
        w.clear();
        prop_assert_eq!(w.stuck_reward(), 0.0);
    }

    #[test]
    fn checkpoint_bytes_round_trip(
        tensors in prop::collection::vec((1usize..5, 1usize..5, prop::collection::vec(-1e6f64..1e6, 25)), 0..6),
        config in "[ -~\n]{0,80}",
    ) {
        let mut ck = Checkpoint::new(config);
        for (n, (r, c, data)) in tensors.into_iter().enumerate() {
            ck.insert(format!("t{n}"), Tensor::new(vec![r, c], data[..r * c].to_vec()).unwrap());
        }
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        prop_assert_eq!(back, ck);
    }

    #[test]
    fn truncated_checkpoint_is_rejected(cut in 0usize..200) {
        let mut ck = Checkpoint::new("x");
        ck.put_scalar("a", 1.5);
        ck.insert("w", Tensor::new(vec![3, 4], vec![0.25; 12]).unwrap());
        let bytes = ck.to_bytes();
        let cut = cut % bytes.len();
        prop_assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err());
    }

    #[test]
    fn avg100_is_the_trailing_mean(rewards in prop::collection::vec(-300.0f64..300.0, 1..260)) {
        for n in 1..=rewards.len() {
            let start = n.saturating_sub(AVG_WINDOW);
            let want = rewards[start..n].iter().sum::<f64>() / (n - start) as f64;
            prop_assert!((windowed_mean(&rewards[..n]) - want).abs() < 1e-9);
        }
    }

    // Arbitrary input never crashes the decoder, and every message survives
    // an encode/decode round trip.
    #[test]
    fn decoder_never_panics(line in ".{0,200}") {
        let _ = decode(&line);
    }

    #[test]
    fn wire_messages_round_trip(
        obs in prop::collection::vec(-1e9f64..1e9, 0..12),
        reward in -1e6f64..1e6,
        done in any::<bool>(),
        seq in proptest::option::of(any::<u64>()),
        seed in any::<u64>(),
    ) {
        let msgs = [
            WireMessage::Hello { version: PROTOCOL_VERSION, seq },
            WireMessage::Reset { seed, seq },
            WireMessage::Step { action: obs.clone(), seq },
            WireMessage::Obs { obs: obs.clone(), info: Some(StepInfo::default()), seq },
            WireMessage::Result {
                obs: obs.clone(),
                reward_raw: reward,
                components: RewardComponents { base: reward, ..Default::default() },
                done,
                cause: if done { Cause::Crashed } else { Cause::Running },
                info: StepInfo::default(),
                seq,
            },
            WireMessage::Error { message: format!("{reward}"), seq },
            WireMessage::Close { seq },
        ];
        for m in msgs {
            prop_assert_eq!(decode(&encode(&m).unwrap()).unwrap(), m);
        }
    }

    // Garbage on the wire is answered with an error and the session stays
    // usable: a well-formed reset afterwards still succeeds.
    #[test]
    fn server_survives_garbage(lines in prop::collection::vec("[^\n]{1,60}", 1..8)) {
        let (mut client, mut server) = loopback_pair();
        let handle = std::thread::spawn(move || {
            let mut env = EnvConfig { kind: EnvKind::Stopgo, ..Default::default() }.build().unwrap();
            bridge::serve(&mut env, &mut server)
        });
        let t = Some(Duration::from_secs(5));
        let hello = encode(&WireMessage::Hello { version: PROTOCOL_VERSION, seq: None }).unwrap();
        client.send_line(&hello).unwrap();
        prop_assert_eq!(decode(&client.recv_line(t).unwrap().unwrap()).unwrap().kind(), "spec");
        for l in &lines {
            if l.trim().is_empty() {
                continue;
            }
            client.send_line(l).unwrap();
            if decode(l).map(|m| m.kind() == "close").unwrap_or(false) {
                return Ok(());
            }
            let reply = decode(&client.recv_line(t).unwrap().unwrap()).unwrap();
            prop_assert!(matches!(reply.kind(), "error" | "spec" | "obs" | "result"), "{}", reply.kind());
        }
        client.send_line(&encode(&WireMessage::Reset { seed: 3, seq: Some(9) }).unwrap()).unwrap();
        let reply = decode(&client.recv_line(t).unwrap().unwrap()).unwrap();
        prop_assert_eq!(reply.kind(), "obs");
        prop_assert_eq!(reply.seq(), Some(9));
        client.send_line(&encode(&WireMessage::Close { seq: None }).unwrap()).unwrap();
        handle.join().unwrap().unwrap();
    }

    // Component streams are deterministic in the master seed and pairwise
    // distinct, so consuming one never shifts another.
    #[test]
    fn seeding_streams_are_independent(master in any::<u64>(), burn in 0usize..50) {
        let draw = |mut r: ChaCha8Rng| -> Vec<u64> { (0..4).map(|_| r.gen()).collect() };
        let ids = [StreamId::Init, StreamId::Env, StreamId::Act, StreamId::Sampler, StreamId::Update, StreamId::Inhibitor];
        let seqs: Vec<Vec<u64>> = ids.iter().map(|&id| draw(stream(master, id))).collect();
        for a in 0..ids.len() {
            prop_assert_eq!(&seqs[a], &draw(stream(master, ids[a])));
            for b in a + 1..ids.len() {
                prop_assert_ne!(&seqs[a], &seqs[b]);
            }
        }
        let mut s = Streams::new(master);
        for _ in 0..burn {
            let _: u64 = s.sampler.gen();
        }
        prop_assert_eq!(draw(s.env), seqs[1].clone());
        prop_assert_eq!(draw(s.act), seqs[2].clone());
    }

    #[test]
    fn rules_are_total_and_deterministic(obs in prop::collection::vec(-2.0f64..2.0, 4..12), present in any::<bool>(), stuck in any::<bool>()) {
        let info = StepInfo { bomb_present: present, stuck, ..Default::default() };
        let rules: [&dyn InhibitionRule; 3] = [&NeverInhibit, &StopZoneRule, &StuckRule];
        for r in rules {
            prop_assert_eq!(r.classify(&obs, &info), r.classify(&obs, &info));
        }
        prop_assert_eq!(NeverInhibit.classify(&obs, &info), Branch::R);
        prop_assert_eq!(StuckRule.classify(&obs, &info), branch_of(stuck));
    }
}

#[test]
fn saci_checkpoint_round_trip_preserves_behaviour() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sac = SacConfig {
        hidden: vec![8, 8],
        ..Default::default()
    };
    let config = SaciConfig {
        sac: sac.clone(),
        ..Default::default()
    };
    let mut agent = SaciAgent::new(6, 2, config.clone(), &mut rng).unwrap();
    agent.temp_r.log_alpha = -0.7;
    agent.temp_i.log_alpha = 0.4;
    let bytes = agent.to_checkpoint("cfg").to_bytes();
    let back = SaciAgent::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap(), config, None).unwrap();
    assert_eq!(back.policy.net, agent.policy.net);
    assert_eq!(back.twin_r.q2_target, agent.twin_r.q2_target);
    assert_eq!(back.twin_i.q1, agent.twin_i.q1);
    assert_eq!((back.alpha(Branch::R), back.alpha(Branch::I)), (agent.alpha(Branch::R), agent.alpha(Branch::I)));
    for s in 0..20 {
        let state: Vec<f64> = (0..6).map(|j| ((s * 6 + j) as f64).sin()).collect();
        assert_eq!(back.act_deterministic(&state).unwrap(), agent.act_deterministic(&state).unwrap());
    }
}
