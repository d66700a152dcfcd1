//! Dense numerical core: row-major matrices, ReLU MLPs with exact reverse-mode
//! gradients, Adam and Polyak averaging. Everything is `f64`.

mod adam;
mod matrix;
mod mlp;
mod tensor_io;

pub use adam::{adam_step, polyak_update, AdamState, BETA1, BETA2, EPSILON};
pub use matrix::Matrix;
pub use mlp::{ForwardCache, Mlp, MlpGrads};
pub use tensor_io::{read_tensor, write_tensor, Tensor};

pub fn mlp_init(layer_sizes: &[usize], seed: u64) -> crate::Result<Mlp> {
    Mlp::init(layer_sizes, seed)
}

/// Converts a network into `(suffix, tensor)` pairs: `w0`, `b0`, `w1`, ...
pub fn mlp_to_tensors(net: &Mlp) -> Vec<(String, Tensor)> {
    let mut out = Vec::new();
    for (i, (w, b)) in net.weights().iter().zip(net.biases()).enumerate() {
        out.push((
            format!("w{i}"),
            Tensor {
                dims: vec![w.rows(), w.cols()],
                data: w.data().to_vec(),
            },
        ));
        out.push((
            format!("b{i}"),
            Tensor {
                dims: vec![b.len()],
                data: b.clone(),
            },
        ));
    }
    out
}

/// Rebuilds a network from tensors produced by [`mlp_to_tensors`], looked up
/// through `get(suffix)`.
pub fn mlp_from_tensors<'a, F>(mut get: F) -> crate::Result<Mlp>
where
    F: FnMut(&str) -> Option<&'a Tensor>,
{
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for i in 0.. {
        let (Some(w), Some(b)) = (get(&format!("w{i}")), get(&format!("b{i}"))) else {
            break;
        };
        if w.dims.len() != 2 || b.dims.len() != 1 {
            return Err(crate::Error::Checkpoint(format!("layer {i} has wrong tensor rank")));
        }
        weights.push(Matrix::from_vec(w.dims[0], w.dims[1], w.data.clone())?);
        biases.push(b.data.clone());
    }
    if weights.is_empty() {
        return Err(crate::Error::Checkpoint("network tensors missing".into()));
    }
    Mlp::from_parts(weights, biases)
}
