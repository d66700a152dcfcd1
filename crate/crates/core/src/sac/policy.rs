use std::f64::consts::PI;

use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::numcore::{AdamState, ForwardCache, Matrix, Mlp, MlpGrads};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Added inside the tanh change-of-variables log term.
pub const SQUASH_EPS: f64 = 1e-6;

/// Tanh-squashed diagonal Gaussian policy. The network maps a state to
/// `[mean (act_dim), log_std (act_dim)]`.
#[derive(Clone, Debug)]
pub struct GaussianPolicy {
    pub net: Mlp,
    pub adam: AdamState,
    act_dim: usize,
}

/// Everything a reparameterized batch sample needs for its backward pass.
#[derive(Clone, Debug)]
pub struct PolicySample {
    pub actions: Matrix,
    pub log_probs: Vec<f64>,
    noise: Matrix,
    log_std: Matrix,
    clamped: Vec<bool>,
    cache: ForwardCache,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * act_dim);
        let net = Mlp::init_with_rng(&sizes, rng)?;
        Self::from_net(net)
    }

    pub fn from_net(net: Mlp) -> Result<Self> {
        let out = net.output_dim();
        if out % 2 != 0 {
            return Err(shape_err(format!("policy head must be even-sized, got {out}")));
        }
        Ok(Self {
            adam: AdamState::for_mlp(&net),
            act_dim: out / 2,
            net,
        })
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    /// Reparameterized sample for a batch of states with externally supplied
    /// standard-normal noise of shape (batch × act_dim).
    pub fn sample(&self, states: &Matrix, noise: &Matrix) -> Result<PolicySample> {
        let d = self.act_dim;
        if noise.shape() != (states.rows(), d) {
            return Err(shape_err(format!(
                "noise has shape {:?}, expected ({}, {d})",
                noise.shape(),
                states.rows()
            )));
        }
        let (out, cache) = self.net.forward(states)?;
        if !out.all_finite() {
            return Err(Error::Numeric("policy network produced a non-finite output".into()));
        }
        let b = states.rows();
        let mut actions = Matrix::zeros(b, d);
        let mut log_std = Matrix::zeros(b, d);
        let mut clamped = vec![false; b * d];
        let mut log_probs = vec![0.0; b];
        let half_log_2pi = 0.5 * (2.0 * PI).ln();
        for r in 0..b {
            let row = out.row(r);
            let mut lp = 0.0;
            for i in 0..d {
                let mean = row[i];
                let raw = row[d + i];
                let ls = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
                clamped[r * d + i] = raw != ls;
                let eps = noise.get(r, i);
                let u = mean + ls.exp() * eps;
                let a = u.tanh();
                lp += -0.5 * eps * eps - ls - half_log_2pi - (1.0 - a * a + SQUASH_EPS).ln();
                actions.set(r, i, a);
                log_std.set(r, i, ls);
            }
            log_probs[r] = lp;
        }
        Ok(PolicySample {
            actions,
            log_probs,
            noise: noise.clone(),
            log_std,
            clamped,
            cache,
        })
    }

    /// Single-state sample: `(action, log_prob)`.
    pub fn sample_action(&self, state: &[f64], noise: &[f64]) -> Result<(Vec<f64>, f64)> {
        let s = self.sample(&Matrix::row_vector(state)?, &Matrix::row_vector(noise)?)?;
        Ok((s.actions.row(0).to_vec(), s.log_probs[0]))
    }

    /// Pre-squash means for a single state.
    pub fn mean(&self, state: &[f64]) -> Result<Vec<f64>> {
        let out = self.net.predict(&Matrix::row_vector(state)?)?;
        if !out.all_finite() {
            return Err(Error::Numeric("policy network produced a non-finite output".into()));
        }
        Ok(out.row(0)[..self.act_dim].to_vec())
    }

    /// Deterministic evaluation action `tanh(mean)`.
    pub fn mode(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(self.mean(state)?.into_iter().map(f64::tanh).collect())
    }

    /// Parameter gradient of `Σ_b [grad_actions_b · a_b + grad_log_probs_b · log π(a_b|s_b)]`
    /// with the noise held fixed.
    pub fn backward(&self, sample: &PolicySample, grad_actions: &Matrix, grad_log_probs: &[f64]) -> Result<MlpGrads> {
        let d = self.act_dim;
        let b = sample.actions.rows();
        if grad_actions.shape() != (b, d) || grad_log_probs.len() != b {
            return Err(shape_err("policy backward received mismatched gradients"));
        }
        let mut grad_out = Matrix::zeros(b, 2 * d);
        for r in 0..b {
            let gl = grad_log_probs[r];
            for i in 0..d {
                let a = sample.actions.get(r, i);
                let s = 1.0 - a * a;
                let eps = sample.noise.get(r, i);
                let sigma = sample.log_std.get(r, i).exp();
                // d/du of -ln(1 - tanh(u)^2 + eps)
                let dlogp_du = 2.0 * a * s / (s + SQUASH_EPS);
                let du = grad_actions.get(r, i) * s + gl * dlogp_du;
                grad_out.set(r, i, du);
                let dls = if sample.clamped[r * d + i] {
                    0.0
                } else {
                    du * sigma * eps - gl
                };
                grad_out.set(r, d + i, dls);
            }
        }
        let (grads, _) = self.net.backward(&sample.cache, &grad_out)?;
        Ok(grads)
    }
}
