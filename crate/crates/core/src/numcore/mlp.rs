use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::{matmul, matmul_a_bt, matmul_at_b, Matrix};
use crate::error::{shape_err, Error, Result};

/// Feed-forward network: ReLU on hidden layers, identity on the output layer.
///
/// `weights[i]` has shape `(layer_sizes[i + 1], layer_sizes[i])`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    pub(crate) weights: Vec<Matrix>,
    pub(crate) biases: Vec<Vec<f64>>,
}

/// Layer inputs recorded by [`Mlp::forward`], consumed by the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// `inputs[i]` is the input of layer `i`; `inputs[0]` is the network input.
    inputs: Vec<Matrix>,
    batch: usize,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.batch
    }
}

/// Parameter-shaped gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for w in &mut self.weights {
            w.data_mut().iter_mut().for_each(|x| *x *= k);
        }
        for b in &mut self.biases {
            b.iter_mut().for_each(|x| *x *= k);
        }
    }

    /// Flat views in the same order as [`Mlp::param_slices`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.weights.len() * 2);
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.data());
            out.push(b.as_slice());
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

impl Mlp {
    /// Uniform fan-in initialization seeded from `seed`; biases start at zero.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with_rng(layer_sizes, &mut rng)
    }

    pub fn init_with_rng<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "a network needs at least an input and an output layer, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config(format!(
                "layer sizes must be positive, got {layer_sizes:?}"
            )));
        }
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            let data = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
            weights.push(Matrix::from_vec(fan_out, fan_in, data)?);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// Builds a network from explicit tensors, validating every shape.
    pub fn from_parts(weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(shape_err("weights and biases must be non-empty and paired"));
        }
        let mut layer_sizes = vec![weights[0].cols()];
        for (i, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.cols() != *layer_sizes.last().unwrap() || b.len() != w.rows() {
                return Err(shape_err(format!("layer {i} has inconsistent shapes")));
            }
            layer_sizes.push(w.rows());
        }
        Ok(Self {
            layer_sizes,
            weights,
            biases,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.weights.len() * 2);
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.data());
            out.push(b.as_slice());
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.weights.len() * 2);
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.data_mut());
            out.push(b.as_mut_slice());
        }
        out
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layer_sizes == other.layer_sizes
    }

    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if input.cols() != self.input_dim() {
            return Err(shape_err(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                input.cols()
            )));
        }
        let batch = input.rows();
        let last = self.weights.len() - 1;
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut current = input.clone();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut out = Matrix::zeros(batch, w.rows());
            matmul_a_bt(&current, w, &mut out);
            for r in 0..batch {
                let row = out.row_mut(r);
                for (x, bias) in row.iter_mut().zip(b) {
                    *x += bias;
                }
                if i != last {
                    row.iter_mut().for_each(|x| {
                        if *x <= 0.0 {
                            *x = 0.0;
                        }
                    });
                }
            }
            inputs.push(std::mem::replace(&mut current, out));
        }
        Ok((current, ForwardCache { inputs, batch }))
    }

    /// Forward pass without keeping the cache.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        self.forward(input).map(|(out, _)| out)
    }

    fn check_cache(&self, cache: &ForwardCache, grad_output: &Matrix) -> Result<()> {
        if cache.inputs.len() != self.weights.len()
            || cache
                .inputs
                .iter()
                .zip(&self.layer_sizes)
                .any(|(m, &s)| m.cols() != s || m.rows() != cache.batch)
        {
            return Err(shape_err("forward cache does not match this network"));
        }
        if grad_output.shape() != (cache.batch, self.output_dim()) {
            return Err(shape_err(format!(
                "output gradient has shape {:?}, expected ({}, {})",
                grad_output.shape(),
                cache.batch,
                self.output_dim()
            )));
        }
        Ok(())
    }

    /// Reverse-mode gradients of `Σ output ⊙ grad_output`, summed over the batch.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &Matrix) -> Result<(MlpGrads, Matrix)> {
        self.check_cache(cache, grad_output)?;
        let mut grads = MlpGrads::zeros_like(self);
        let grad_input = self.backprop(cache, grad_output, Some(&mut grads));
        Ok((grads, grad_input))
    }

    /// Gradient with respect to the network input only.
    pub fn backward_input(&self, cache: &ForwardCache, grad_output: &Matrix) -> Result<Matrix> {
        self.check_cache(cache, grad_output)?;
        Ok(self.backprop(cache, grad_output, None))
    }

    fn backprop(
        &self,
        cache: &ForwardCache,
        grad_output: &Matrix,
        mut grads: Option<&mut MlpGrads>,
    ) -> Matrix {
        let batch = cache.batch;
        let mut delta = grad_output.clone();
        for l in (0..self.weights.len()).rev() {
            let w = &self.weights[l];
            let layer_in = &cache.inputs[l];
            if let Some(g) = grads.as_deref_mut() {
                matmul_at_b(&delta, layer_in, &mut g.weights[l]);
                let gb = &mut g.biases[l];
                for r in 0..batch {
                    for (acc, d) in gb.iter_mut().zip(delta.row(r)) {
                        *acc += d;
                    }
                }
            }
            let mut grad_in = Matrix::zeros(batch, w.cols());
            matmul(&delta, w, &mut grad_in);
            if l > 0 {
                // ReLU mask; the subgradient at exactly zero is zero.
                for (g, a) in grad_in.data_mut().iter_mut().zip(layer_in.data()) {
                    if *a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            delta = grad_in;
        }
        delta
    }
}
