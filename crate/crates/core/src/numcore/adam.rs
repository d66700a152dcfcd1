use super::mlp::{Mlp, MlpGrads};
use crate::error::{shape_err, Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moments for a list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn for_shapes(lengths: &[usize]) -> Self {
        Self {
            m: lengths.iter().map(|&n| vec![0.0; n]).collect(),
            v: lengths.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn for_mlp(net: &Mlp) -> Self {
        let lengths: Vec<usize> = net.param_slices().iter().map(|s| s.len()).collect();
        Self::for_shapes(&lengths)
    }

    pub fn for_scalar() -> Self {
        Self::for_shapes(&[1])
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam step over matching parameter and gradient slices.
    /// Non-finite gradients refuse the step and leave everything untouched.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(shape_err("optimizer state does not match parameter list"));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(shape_err("optimizer state does not match parameter shapes"));
            }
        }
        if grads.iter().any(|g| g.iter().any(|x| !x.is_finite())) {
            return Err(Error::Numeric("non-finite gradient, Adam step refused".into()));
        }
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
        Ok(())
    }
}

pub fn adam_step(net: &mut Mlp, grads: &MlpGrads, state: &mut AdamState, lr: f64) -> Result<()> {
    let g = grads.slices();
    let mut p = net.param_slices_mut();
    state.step(&mut p, &g, lr)
}

/// `target ← (1 − tau)·target + tau·online`, elementwise.
pub fn polyak_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !target.same_shape(online) {
        return Err(shape_err(format!(
            "target {:?} and online {:?} differ in shape",
            target.layer_sizes(),
            online.layer_sizes()
        )));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("tau must lie in [0, 1], got {tau}")));
    }
    let src = online.param_slices();
    for (t, o) in target.param_slices_mut().into_iter().zip(src) {
        for (x, y) in t.iter_mut().zip(o) {
            *x = (1.0 - tau) * *x + tau * y;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Matrix;

    fn scalar_net(v: f64) -> Mlp {
        Mlp::from_parts(vec![Matrix::from_vec(1, 1, vec![v]).unwrap()], vec![vec![0.0]]).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut net = Mlp::init(&[3, 4, 2], 5).unwrap();
        let before = net.clone();
        let mut st = AdamState::for_mlp(&net);
        adam_step(&mut net, &MlpGrads::zeros_like(&before), &mut st, 1e-3).unwrap();
        assert_eq!(net, before);
        assert_eq!(st.steps(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g, v̂ = g², so the update is lr·g/(|g| + ε).
        let mut p = [0.0];
        let mut st = AdamState::for_scalar();
        st.step(&mut [&mut p[..]], &[&[1.0]], 0.001).unwrap();
        let expected = -0.001 / (1.0 + EPSILON);
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = [0.3, -0.2];
            let mut st = AdamState::for_shapes(&[2]);
            for _ in 0..5 {
                st.step(&mut [&mut p[..]], &[&[0.5, -1.5]], 0.01).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_is_refused() {
        let mut p = [1.0];
        let mut st = AdamState::for_scalar();
        let err = st.step(&mut [&mut p[..]], &[&[f64::INFINITY]], 0.1);
        assert!(matches!(err, Err(Error::Numeric(_))));
        assert_eq!(p[0], 1.0);
        assert_eq!(st.steps(), 0);
    }

    #[test]
    fn polyak_endpoints_and_midpoint() {
        let online = scalar_net(2.0);
        let mut t = scalar_net(0.0);
        polyak_update(&mut t, &online, 0.5).unwrap();
        assert_eq!(t.weights()[0].data(), &[1.0]);
        let mut t = scalar_net(0.0);
        polyak_update(&mut t, &online, 1.0).unwrap();
        assert_eq!(t, online);
        let mut t = scalar_net(0.7);
        polyak_update(&mut t, &online, 0.0).unwrap();
        assert_eq!(t.weights()[0].data(), &[0.7]);
    }

    #[test]
    fn polyak_shape_mismatch() {
        let mut a = Mlp::init(&[2, 3, 1], 0).unwrap();
        let b = Mlp::init(&[2, 4, 1], 0).unwrap();
        assert!(matches!(polyak_update(&mut a, &b, 0.1), Err(Error::Shape(_))));
    }
}
