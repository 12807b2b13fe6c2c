//! Proximal policy optimization for the blue defender.

mod dist;
mod gae;
mod loss;
mod net;
mod optim;
mod train;

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dist::{argmax, entropy, log_softmax, sample_action};
pub use gae::compute_gae;
pub use loss::{loss_and_grad, normalize_advantages, LossCoefficients, LossParts, Minibatch};
pub use net::{Architecture, ForwardCache, NetSpec, PolicyParams, TensorSpec};
pub use optim::{clip_grad_norm, Adam};
pub use train::{
    evaluate_policy, load_weights, save_weights, train, train_with_fault, EvalPoint, GreedyPolicy, RunRecord,
    UpdateMetrics, WeightsManifest,
};

use crate::env::{EnvError, NUM_BLUE_ACTIONS, OBS_DIM};

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),
    #[error("non-finite {what} at timestep {timestep}")]
    NonFinite { what: String, timestep: u64 },
    #[error("non-finite observation input")]
    NonFiniteInput,
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub learning_rate: f64,
    pub gamma: f64,
    pub clip_range: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub n_steps: usize,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub total_timesteps: u64,
    pub max_grad_norm: f64,
    pub adam_epsilon: f64,
    pub hidden_sizes: Vec<usize>,
    pub architecture: Architecture,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            learning_rate: 3e-4,
            gamma: 0.99,
            clip_range: 0.2,
            epochs: 6,
            batch_size: 64,
            n_steps: 2048,
            gae_lambda: 0.95,
            entropy_coef: 0.0,
            value_coef: 0.5,
            total_timesteps: 2_500_000,
            max_grad_norm: 0.5,
            adam_epsilon: 1e-5,
            hidden_sizes: vec![64, 64],
            architecture: Architecture::Separate,
        }
    }
}

impl Hyperparameters {
    // The negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), PpoError> {
        let bad = |msg: String| Err(PpoError::InvalidHyperparameters(msg));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!("gae_lambda {} outside [0, 1]", self.gae_lambda));
        }
        if !(self.clip_range > 0.0) {
            return bad(format!("clip_range {} must be positive", self.clip_range));
        }
        if self.batch_size == 0 || self.n_steps == 0 || !self.n_steps.is_multiple_of(self.batch_size) {
            return bad(format!(
                "batch_size {} must divide n_steps {}",
                self.batch_size, self.n_steps
            ));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0) || !(self.adam_epsilon > 0.0) || !(self.max_grad_norm > 0.0) {
            return bad("learning_rate, adam_epsilon and max_grad_norm must be non-negative/positive".into());
        }
        Ok(())
    }

    pub fn net_spec(&self) -> NetSpec {
        NetSpec::new(OBS_DIM, NUM_BLUE_ACTIONS, self.hidden_sizes.clone(), self.architecture)
    }

    pub fn coefficients(&self) -> LossCoefficients {
        LossCoefficients {
            clip_range: self.clip_range,
            value_coef: self.value_coef,
            entropy_coef: self.entropy_coef,
        }
    }
}

/// Per-step rollout storage plus the computed advantages and returns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    obs_dim: usize,
    pub observations: Vec<f64>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// Episode ended after this step.
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(obs_dim: usize, capacity: usize) -> Self {
        RolloutBuffer {
            obs_dim,
            observations: Vec::with_capacity(obs_dim * capacity),
            actions: Vec::with_capacity(capacity),
            log_probs: Vec::with_capacity(capacity),
            rewards: Vec::with_capacity(capacity),
            values: Vec::with_capacity(capacity),
            dones: Vec::with_capacity(capacity),
            advantages: Vec::new(),
            returns: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn clear(&mut self) {
        self.observations.clear();
        self.actions.clear();
        self.log_probs.clear();
        self.rewards.clear();
        self.values.clear();
        self.dones.clear();
        self.advantages.clear();
        self.returns.clear();
    }

    pub fn push(&mut self, obs: &[f64], action: usize, log_prob: f64, reward: f64, value: f64, done: bool) {
        debug_assert_eq!(obs.len(), self.obs_dim);
        self.observations.extend_from_slice(obs);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.values.push(value);
        self.dones.push(done);
    }

    pub fn finish(&mut self, last_value: f64, gamma: f64, lambda: f64) {
        let (adv, ret) = compute_gae(&self.rewards, &self.values, &self.dones, last_value, gamma, lambda);
        self.advantages = adv;
        self.returns = ret;
    }

    pub fn observation(&self, i: usize) -> &[f64] {
        &self.observations[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }
}

/// Runs `epochs` passes of shuffled minibatch updates over a finished
/// buffer. Returns metrics averaged over all minibatches.
pub fn ppo_update<R: Rng + ?Sized>(
    params: &mut PolicyParams,
    buffer: &RolloutBuffer,
    hp: &Hyperparameters,
    optimizer: &mut Adam,
    rng: &mut R,
) -> Result<LossParts, PpoError> {
    let n = buffer.len();
    assert_eq!(buffer.advantages.len(), n, "buffer not finished");
    let obs_dim = buffer.obs_dim();
    let coef = hp.coefficients();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut sum = LossParts::default();
    let mut count = 0usize;
    let mut obs = Vec::with_capacity(hp.batch_size * obs_dim);
    for _ in 0..hp.epochs {
        indices.shuffle(rng);
        for chunk in indices.chunks(hp.batch_size) {
            obs.clear();
            for &i in chunk {
                obs.extend_from_slice(buffer.observation(i));
            }
            let gather = |v: &[f64]| chunk.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let actions: Vec<usize> = chunk.iter().map(|&i| buffer.actions[i]).collect();
            let old_log_probs = gather(&buffer.log_probs);
            let advantages = normalize_advantages(&gather(&buffer.advantages));
            let returns = gather(&buffer.returns);
            let batch = Minibatch {
                obs: ArrayView2::from_shape((chunk.len(), obs_dim), &obs).expect("batch shape"),
                actions: &actions,
                old_log_probs: &old_log_probs,
                advantages: &advantages,
                returns: &returns,
            };
            let (parts, mut grad) = loss_and_grad(params, &batch, coef);
            if !parts.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(PpoError::NonFinite {
                    what: "loss".into(),
                    timestep: 0,
                });
            }
            clip_grad_norm(&mut grad, hp.max_grad_norm);
            optimizer.step(&mut params.data, &grad);
            sum.total += parts.total;
            sum.policy_loss += parts.policy_loss;
            sum.value_loss += parts.value_loss;
            sum.entropy += parts.entropy;
            sum.clip_fraction += parts.clip_fraction;
            sum.approx_kl += parts.approx_kl;
            count += 1;
        }
    }
    let c = count.max(1) as f64;
    let mean = LossParts {
        total: sum.total / c,
        policy_loss: sum.policy_loss / c,
        value_loss: sum.value_loss / c,
        entropy: sum.entropy / c,
        clip_fraction: sum.clip_fraction / c,
        approx_kl: sum.approx_kl / c,
    };
    debug_assert!((0.0..=1.0).contains(&mean.clip_fraction));
    debug_assert!(mean.value_loss >= 0.0);
    Ok(mean)
}

/// Logits and value for one observation; rejects non-finite input.
pub fn policy_forward(params: &PolicyParams, obs: &[f64]) -> Result<(Vec<f64>, f64), PpoError> {
    if obs.iter().any(|v| !v.is_finite()) {
        return Err(PpoError::NonFiniteInput);
    }
    Ok(params.forward(obs))
}
