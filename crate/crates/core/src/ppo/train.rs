//! Rollout collection, the training loop, greedy evaluation and weight I/O.

use std::fs;
use std::io;
use std::path::Path;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dist::{argmax, sample_action};
use super::net::{NetSpec, PolicyParams, TensorSpec};
use super::optim::Adam;
use super::{policy_forward, ppo_update, Hyperparameters, LossParts, PpoError, RolloutBuffer};
use crate::agents::BluePolicy;
use crate::env::{BlueAction, BlueObservation, EnvConfig, EnvError, Environment, OBS_DIM};
use crate::seeding::derive_seed;

/// Acts by taking the most probable action of a trained policy.
#[derive(Debug, Clone)]
pub struct GreedyPolicy {
    pub params: PolicyParams,
}

impl BluePolicy for GreedyPolicy {
    fn act(&mut self, obs: &BlueObservation) -> BlueAction {
        let logits = self.params.policy_logits(&obs.values);
        BlueAction::from_index(argmax(&logits)).expect("logit count matches action space")
    }
}

/// Runs `episodes` full episodes and returns each episode's summed reward.
/// Episode `i` resets with a seed derived from `(seed, i)`, and the red
/// agent's own randomness is seeded from `seed`, so two policies evaluated
/// with the same seed face identical attacker and environment draws.
pub fn evaluate_policy(
    policy: &mut dyn BluePolicy,
    env_config: &EnvConfig,
    episodes: usize,
    seed: u64,
) -> Result<Vec<f64>, EnvError> {
    let mut cfg = env_config.clone();
    cfg.seed = derive_seed(&["eval-red", &seed.to_string()]);
    let mut env = Environment::new(cfg)?;
    let mut returns = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let mut obs = env.reset(derive_seed(&["eval-episode", &seed.to_string(), &i.to_string()]));
        let mut total = 0.0;
        loop {
            let out = env.step(policy.act(&obs))?;
            total += out.reward.total;
            obs = out.observation;
            if out.done {
                break;
            }
        }
        returns.push(total);
    }
    Ok(returns)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub timestep: u64,
    pub mean_return: f64,
}

mod eval_pairs {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::EvalPoint;

    pub fn serialize<S: Serializer>(v: &[EvalPoint], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|p| (p.timestep, p.mean_return)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<EvalPoint>, D::Error> {
        let pairs = Vec::<(u64, f64)>::deserialize(d)?;
        Ok(pairs
            .into_iter()
            .map(|(timestep, mean_return)| EvalPoint { timestep, mean_return })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub timestep: u64,
    #[serde(flatten)]
    pub loss: LossParts,
}

/// Training trace for one seed. Weights are persisted separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub hparams: Hyperparameters,
    pub env_config: EnvConfig,
    #[serde(with = "eval_pairs")]
    pub eval_curve: Vec<EvalPoint>,
    pub metrics_curve: Vec<UpdateMetrics>,
    /// Per-episode returns of the last evaluation.
    pub final_eval_returns: Vec<f64>,
    pub timesteps: u64,
    /// Set when training stopped early on a numeric fault.
    pub aborted: Option<String>,
    pub wall_time: f64,
    #[serde(skip)]
    pub final_params: Option<PolicyParams>,
}

impl RunRecord {
    pub fn final_score(&self) -> Option<f64> {
        self.eval_curve.last().map(|p| p.mean_return)
    }

    /// JSON with `wall_time` zeroed, for reproducibility comparisons.
    pub fn to_json_without_wall_time(&self) -> String {
        let mut copy = self.clone();
        copy.wall_time = 0.0;
        serde_json::to_string_pretty(&copy).expect("record serializes")
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Shape manifest written beside a flat little-endian f64 weight file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsManifest {
    pub dtype: String,
    pub byte_order: String,
    pub total_len: usize,
    pub net: NetSpec,
    pub tensors: Vec<TensorSpec>,
}

/// Writes `<stem>.bin` and `<stem>.json` in `dir`.
pub fn save_weights(params: &PolicyParams, dir: &Path, stem: &str) -> io::Result<()> {
    let bytes: Vec<u8> = params.data.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(dir.join(format!("{stem}.bin")), bytes)?;
    let manifest = WeightsManifest {
        dtype: "f64".into(),
        byte_order: "little".into(),
        total_len: params.len(),
        net: params.spec().clone(),
        tensors: params.tensors().to_vec(),
    };
    fs::write(
        dir.join(format!("{stem}.json")),
        serde_json::to_string_pretty(&manifest)?,
    )
}

pub fn load_weights(dir: &Path, stem: &str) -> io::Result<PolicyParams> {
    let manifest: WeightsManifest = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
    let bytes = fs::read(dir.join(format!("{stem}.bin")))?;
    let invalid = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
    if bytes.len() != manifest.total_len * 8 {
        return Err(invalid("weight file length does not match manifest"));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    PolicyParams::from_data(manifest.net, data).ok_or_else(|| invalid("weight count does not match network"))
}

/// Trains a PPO defender against `env_config`'s attacker.
///
/// Evaluation runs before training, after each update that crosses a
/// multiple of `eval_every`, and at the end. On a numeric fault the partial
/// record is returned inside the error.
pub fn train(
    env_config: &EnvConfig,
    hp: &Hyperparameters,
    seed: u64,
    eval_every: u64,
    eval_episodes: usize,
) -> Result<RunRecord, Box<(PpoError, RunRecord)>> {
    train_with_fault(env_config, hp, seed, eval_every, eval_episodes, None)
}

/// As [`train`], optionally poisoning the parameters with NaN just before
/// the update that starts at `fault_at` timesteps. Used to exercise the
/// abort path end to end.
pub fn train_with_fault(
    env_config: &EnvConfig,
    hp: &Hyperparameters,
    seed: u64,
    eval_every: u64,
    eval_episodes: usize,
    fault_at: Option<u64>,
) -> Result<RunRecord, Box<(PpoError, RunRecord)>> {
    let start = Instant::now();
    let mut record = RunRecord {
        seed,
        hparams: hp.clone(),
        env_config: env_config.clone(),
        eval_curve: Vec::new(),
        metrics_curve: Vec::new(),
        final_eval_returns: Vec::new(),
        timesteps: 0,
        aborted: None,
        wall_time: 0.0,
        final_params: None,
    };
    let fail = |err: PpoError, mut record: RunRecord| {
        record.aborted = Some(err.to_string());
        record.wall_time = start.elapsed().as_secs_f64();
        Box::new((err, record))
    };
    if let Err(e) = hp.validate() {
        return Err(fail(e, record));
    }
    let seed_str = seed.to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&["train", &seed_str]));
    let mut episode_seeds = ChaCha8Rng::seed_from_u64(derive_seed(&["train-episodes", &seed_str]));
    let eval_seed = derive_seed(&["train-eval", &seed_str]);
    let mut cfg = env_config.clone();
    cfg.seed = derive_seed(&["train-red", &seed_str]);
    let mut env = match Environment::new(cfg) {
        Ok(env) => env,
        Err(e) => return Err(fail(e.into(), record)),
    };

    let mut params = PolicyParams::init(hp.net_spec(), &mut rng);
    let mut adam = Adam::new(params.len(), hp.learning_rate, hp.adam_epsilon);
    let mut buffer = RolloutBuffer::new(OBS_DIM, hp.n_steps);
    let mut obs = env.reset(episode_seeds.next_u64());
    let mut timesteps = 0u64;

    let evaluate = |params: &PolicyParams, record: &mut RunRecord, t: u64| -> Result<(), PpoError> {
        let mut greedy = GreedyPolicy { params: params.clone() };
        let returns = evaluate_policy(&mut greedy, env_config, eval_episodes, eval_seed)?;
        let mean = returns.iter().sum::<f64>() / returns.len().max(1) as f64;
        record.eval_curve.push(EvalPoint {
            timestep: t,
            mean_return: mean,
        });
        record.final_eval_returns = returns;
        Ok(())
    };
    if let Err(e) = evaluate(&params, &mut record, 0) {
        return Err(fail(e, record));
    }

    while timesteps < hp.total_timesteps {
        if fault_at == Some(timesteps) {
            params.data.iter_mut().for_each(|v| *v = f64::NAN);
        }
        buffer.clear();
        for _ in 0..hp.n_steps {
            let (logits, value) = match policy_forward(&params, &obs.values) {
                Ok(v) => v,
                Err(e) => return Err(fail(e, record)),
            };
            if !value.is_finite() || logits.iter().any(|l| !l.is_finite()) {
                record.final_params = Some(params);
                return Err(fail(
                    PpoError::NonFinite {
                        what: "policy output".into(),
                        timestep: timesteps,
                    },
                    record,
                ));
            }
            let (action, log_prob) = sample_action(&logits, &mut rng);
            let out = match env.step(BlueAction::from_index(action).expect("valid action index")) {
                Ok(out) => out,
                Err(e) => return Err(fail(e.into(), record)),
            };
            buffer.push(&obs.values, action, log_prob, out.reward.total, value, out.done);
            obs = if out.done {
                env.reset(episode_seeds.next_u64())
            } else {
                out.observation
            };
            timesteps += 1;
        }
        let (_, last_value) = params.forward(&obs.values);
        buffer.finish(last_value, hp.gamma, hp.gae_lambda);
        if buffer.advantages.iter().any(|a| !a.is_finite()) {
            return Err(fail(
                PpoError::NonFinite {
                    what: "advantages".into(),
                    timestep: timesteps,
                },
                record,
            ));
        }
        match ppo_update(&mut params, &buffer, hp, &mut adam, &mut rng) {
            Ok(loss) => record.metrics_curve.push(UpdateMetrics {
                timestep: timesteps,
                loss,
            }),
            Err(PpoError::NonFinite { what, .. }) => {
                return Err(fail(
                    PpoError::NonFinite {
                        what,
                        timestep: timesteps,
                    },
                    record,
                ));
            }
            Err(e) => return Err(fail(e, record)),
        }
        record.timesteps = timesteps;
        let prev = timesteps - hp.n_steps as u64;
        let crossed = eval_every > 0 && timesteps / eval_every > prev / eval_every;
        if crossed || timesteps >= hp.total_timesteps {
            if let Err(e) = evaluate(&params, &mut record, timesteps) {
                return Err(fail(e, record));
            }
        }
    }
    record.timesteps = timesteps;
    record.final_params = Some(params);
    record.wall_time = start.elapsed().as_secs_f64();
    Ok(record)
}
