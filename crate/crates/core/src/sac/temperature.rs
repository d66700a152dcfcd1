use crate::error::Result;
use crate::numcore::AdamState;

/// Entropy temperature `α = exp(log_alpha)`, tuned toward `target_entropy`.
#[derive(Clone, Debug)]
pub struct Temperature {
    pub log_alpha: f64,
    pub adam: AdamState,
    pub target_entropy: f64,
}

impl Temperature {
    pub fn new(log_alpha: f64, target_entropy: f64) -> Self {
        Self {
            log_alpha,
            adam: AdamState::for_scalar(),
            target_entropy,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// One Adam step on `log_alpha`. An empty batch is a no-op.
    pub fn update(&mut self, log_probs: &[f64], lr: f64) -> Result<Option<f64>> {
        if log_probs.is_empty() {
            return Ok(None);
        }
        let (loss, grad) = alpha_loss(self, log_probs);
        let mut p = [self.log_alpha];
        self.adam.step(&mut [&mut p[..]], &[&[grad]], lr)?;
        self.log_alpha = p[0];
        Ok(Some(loss))
    }
}

/// `J_α = mean[−α log π − α H0]` and its derivative with respect to `log_alpha`
/// (log-probs are constants here). Returns `(0, 0)` for an empty slice.
pub fn alpha_loss(temp: &Temperature, log_probs: &[f64]) -> (f64, f64) {
    if log_probs.is_empty() {
        return (0.0, 0.0);
    }
    let alpha = temp.alpha();
    let mean_neg_logp = -log_probs.iter().sum::<f64>() / log_probs.len() as f64;
    let gap = mean_neg_logp - temp.target_entropy;
    // dα/dlogα = α
    (alpha * gap, alpha * gap)
}
