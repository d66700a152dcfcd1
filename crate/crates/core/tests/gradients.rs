//! Analytic gradients of every training loss against central finite differences.

use inhibitory_sac::numcore::{Matrix, Mlp, MlpGrads};
use inhibitory_sac::sac::{alpha_loss, normal_matrix, policy_loss, q_loss, GaussianPolicy, SacBatch, Temperature, TwinQ};
use inhibitory_sac::saci::{composite_policy_loss, dual_alpha_loss, q_loss_branch, BranchPolicyInput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const OBS: usize = 4;
const ACT: usize = 2;
const HIDDEN: [usize; 2] = [16, 16];
const H: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn batch(rng: &mut ChaCha8Rng, n: usize) -> SacBatch {
    let mut m = |cols| {
        let data = (0..n * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::from_vec(n, cols, data).unwrap()
    };
    let states = m(OBS);
    let actions = m(ACT);
    let next_states = m(OBS);
    let rewards = (0..n).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
    let dones = (0..n).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect();
    SacBatch {
        states,
        actions,
        rewards,
        next_states,
        dones,
    }
}

/// Central-difference gradient of `loss` over every parameter of `net`.
fn numeric(net: &Mlp, loss: impl Fn(&Mlp) -> f64) -> Vec<f64> {
    let mut probe = net.clone();
    let mut out = Vec::new();
    let n_slices = net.param_slices().len();
    for s in 0..n_slices {
        for j in 0..net.param_slices()[s].len() {
            let orig = net.param_slices()[s][j];
            probe.param_slices_mut()[s][j] = orig + H;
            let up = loss(&probe);
            probe.param_slices_mut()[s][j] = orig - H;
            let down = loss(&probe);
            probe.param_slices_mut()[s][j] = orig;
            out.push((up - down) / (2.0 * H));
        }
    }
    out
}

fn flat(g: &MlpGrads) -> Vec<f64> {
    g.slices().concat()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(na > 1e-8, "gradient is identically zero");
    diff / na.max(nb)
}

struct Fixture {
    policy: GaussianPolicy,
    twin: TwinQ,
    twin_i: TwinQ,
    batch: SacBatch,
    batch_i: SacBatch,
    noise: Matrix,
    noise_i: Matrix,
}

fn fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = GaussianPolicy::new(OBS, ACT, &HIDDEN, &mut rng).unwrap();
    let mut twin = TwinQ::new(OBS, ACT, &HIDDEN, &mut rng).unwrap();
    // distinct targets so the bootstrap does not mirror the online heads
    twin.q1_target = Mlp::init_with_rng(&[OBS + ACT, 16, 16, 1], &mut rng).unwrap();
    twin.q2_target = Mlp::init_with_rng(&[OBS + ACT, 16, 16, 1], &mut rng).unwrap();
    let twin_i = TwinQ::new(OBS, ACT, &HIDDEN, &mut rng).unwrap();
    let batch = batch(&mut rng, 12);
    let batch_i = self::batch(&mut rng, 7);
    let noise = normal_matrix(&mut rng, 12, ACT);
    let noise_i = normal_matrix(&mut rng, 7, ACT);
    Fixture {
        policy,
        twin,
        twin_i,
        batch,
        batch_i,
        noise,
        noise_i,
    }
}

#[test]
fn critic_loss_gradient_matches_finite_differences() {
    for seed in 0..3 {
        let f = fixture(seed);
        let (alpha, gamma) = (0.3, 0.99);
        let next_noise = normal_matrix(&mut ChaCha8Rng::seed_from_u64(100 + seed), 12, ACT);
        let l = q_loss(&f.twin, &f.batch, &f.policy, alpha, gamma, &next_noise).unwrap();
        // targets are held fixed: perturbing the online head leaves them alone
        let fd1 = numeric(&f.twin.q1, |q1| {
            let mut t = f.twin.clone();
            t.q1 = q1.clone();
            q_loss(&t, &f.batch, &f.policy, alpha, gamma, &next_noise).unwrap().loss_q1
        });
        let fd2 = numeric(&f.twin.q2, |q2| {
            let mut t = f.twin.clone();
            t.q2 = q2.clone();
            q_loss(&t, &f.batch, &f.policy, alpha, gamma, &next_noise).unwrap().loss_q2
        });
        assert!(rel_err(&flat(&l.grads_q1), &fd1) < TOL);
        assert!(rel_err(&flat(&l.grads_q2), &fd2) < TOL);
    }
}

#[test]
fn branch_critic_loss_gradient_matches_finite_differences() {
    let f = fixture(7);
    let (alpha_i, gamma) = (1.7, 0.95);
    let l = q_loss_branch(&f.twin_i, &f.batch_i, &f.policy, alpha_i, gamma, &f.noise_i).unwrap();
    let fd = numeric(&f.twin_i.q1, |q1| {
        let mut t = f.twin_i.clone();
        t.q1 = q1.clone();
        q_loss_branch(&t, &f.batch_i, &f.policy, alpha_i, gamma, &f.noise_i).unwrap().loss_q1
    });
    assert!(rel_err(&flat(&l.grads_q1), &fd) < TOL);
}

#[test]
fn policy_loss_gradient_matches_finite_differences() {
    for seed in 0..3 {
        let f = fixture(seed);
        let alpha = 0.2;
        let l = policy_loss(&f.policy, &f.twin, &f.batch.states, alpha, &f.noise).unwrap();
        let fd = numeric(&f.policy.net, |net| {
            let p = GaussianPolicy::from_net(net.clone()).unwrap();
            policy_loss(&p, &f.twin, &f.batch.states, alpha, &f.noise).unwrap().loss
        });
        assert!(rel_err(&flat(&l.grads), &fd) < TOL, "seed {seed}");
    }
}

#[test]
fn composite_policy_loss_gradient_matches_finite_differences() {
    let f = fixture(11);
    let (alpha_r, alpha_i) = (0.4, 2.5);
    let eval = |p: &GaussianPolicy| {
        composite_policy_loss(
            p,
            Some(BranchPolicyInput {
                twin: &f.twin,
                states: &f.batch.states,
                alpha: alpha_r,
                noise: &f.noise,
            }),
            Some(BranchPolicyInput {
                twin: &f.twin_i,
                states: &f.batch_i.states,
                alpha: alpha_i,
                noise: &f.noise_i,
            }),
        )
        .unwrap()
    };
    let (loss, grads) = eval(&f.policy);
    let fd = numeric(&f.policy.net, |net| eval(&GaussianPolicy::from_net(net.clone()).unwrap()).0);
    assert!(rel_err(&flat(&grads), &fd) < TOL);

    // the composite is the sum of the two single-branch losses
    let r = policy_loss(&f.policy, &f.twin, &f.batch.states, alpha_r, &f.noise).unwrap();
    let i = policy_loss(&f.policy, &f.twin_i, &f.batch_i.states, alpha_i, &f.noise_i).unwrap();
    assert!((loss - (r.loss + i.loss)).abs() < 1e-10);
}

#[test]
fn temperature_loss_gradient_matches_finite_differences() {
    let log_probs = [-2.1, -3.4, -0.7, -4.0, 1.2];
    for log_alpha in [-2.0, -0.3, 0.0, 1.1] {
        let t = Temperature::new(log_alpha, -3.0);
        let (_, g) = alpha_loss(&t, &log_probs);
        let at = |la: f64| alpha_loss(&Temperature::new(la, -3.0), &log_probs).0;
        let fd = (at(log_alpha + H) - at(log_alpha - H)) / (2.0 * H);
        assert!(((g - fd) / g.abs().max(fd.abs())).abs() < TOL);
        let (_, gk) = dual_alpha_loss(&t, &log_probs).unwrap();
        assert_eq!(gk, g);
    }
    assert!(dual_alpha_loss(&Temperature::new(0.0, -3.0), &[]).is_none());
}
