//! Clipped-surrogate PPO loss and its gradient.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::dist::{entropy, log_softmax};
use super::net::PolicyParams;

/// One minibatch, advantages already normalized if desired.
pub struct Minibatch<'a> {
    pub obs: ArrayView2<'a, f64>,
    pub actions: &'a [usize],
    pub old_log_probs: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefficients {
    pub clip_range: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Shifts advantages to mean 0 and scales to unit (sample) standard
/// deviation. Single-element batches are left alone.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    let n = adv.len();
    if n < 2 {
        return adv.to_vec();
    }
    let mean = adv.iter().sum::<f64>() / n as f64;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    adv.iter().map(|a| (a - mean) / (std + 1e-8)).collect()
}

/// Loss = -clipped surrogate + value_coef * MSE(value, return)
///        - entropy_coef * entropy, averaged over the minibatch.
/// Returns the loss parts and the gradient with respect to every parameter.
pub fn loss_and_grad(params: &PolicyParams, batch: &Minibatch, coef: LossCoefficients) -> (LossParts, Vec<f64>) {
    let cache = params.forward_batch(batch.obs);
    let b = batch.actions.len();
    let bf = b as f64;
    let n_actions = cache.logits.ncols();
    let mut d_logits = Array2::<f64>::zeros((b, n_actions));
    let mut d_values = Array1::<f64>::zeros(b);
    let mut parts = LossParts::default();
    let (lo, hi) = (1.0 - coef.clip_range, 1.0 + coef.clip_range);

    for i in 0..b {
        let logits = cache.logits.row(i);
        let lp = log_softmax(logits.as_slice().expect("row-major"));
        let a = batch.actions[i];
        let adv = batch.advantages[i];
        let log_ratio = lp[a] - batch.old_log_probs[i];
        let ratio = log_ratio.exp();
        let clipped = ratio.clamp(lo, hi);
        let unclipped_obj = ratio * adv;
        let clipped_obj = clipped * adv;
        let surrogate = unclipped_obj.min(clipped_obj);
        parts.policy_loss -= surrogate / bf;
        if (ratio - 1.0).abs() > coef.clip_range {
            parts.clip_fraction += 1.0 / bf;
        }
        parts.approx_kl += ((ratio - 1.0) - log_ratio) / bf;

        // d(-surrogate/B)/d(log pi(a)); zero once the clamped branch is
        // selected and saturated.
        let d_logp = if unclipped_obj <= clipped_obj || (lo..=hi).contains(&ratio) {
            -adv * ratio / bf
        } else {
            0.0
        };
        let h = entropy(&lp);
        parts.entropy += h / bf;
        let mut row = d_logits.row_mut(i);
        for j in 0..n_actions {
            let p = lp[j].exp();
            let indicator = if j == a { 1.0 } else { 0.0 };
            // log-prob term, then -entropy_coef * dH/dz_j with dH/dz_j = -p_j (log p_j + H).
            row[j] = d_logp * (indicator - p) + coef.entropy_coef * p * (lp[j] + h) / bf;
        }

        let err = cache.values[i] - batch.returns[i];
        parts.value_loss += err * err / bf;
        d_values[i] = coef.value_coef * 2.0 * err / bf;
    }
    parts.total = parts.policy_loss + coef.value_coef * parts.value_loss - coef.entropy_coef * parts.entropy;
    let grad = params.backward(&cache, d_logits.view(), &d_values);
    (parts, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_advantages_have_zero_mean_unit_std() {
        let adv = [1.0, 2.0, 3.0, 10.0, -4.0];
        let n = normalize_advantages(&adv);
        let mean = n.iter().sum::<f64>() / 5.0;
        let var = n.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var.sqrt() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn equal_advantages_normalize_to_zero() {
        assert!(normalize_advantages(&[3.0; 8]).iter().all(|&a| a == 0.0));
    }
}
