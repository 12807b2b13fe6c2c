//! Built-in invariant checks run by `acd selftest`.

use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::agents::{random_blue, BluePolicy, RedPolicyName};
use crate::env::{
    BlueAction, EnvConfig, Environment, RedAction, TurnOrder, NUM_BLUE_ACTIONS, NUM_HOSTS, NUM_RED_ACTIONS, OBS_DIM,
};
use crate::ppo::{
    compute_gae, log_softmax, loss_and_grad, Architecture, LossCoefficients, Minibatch, NetSpec, PolicyParams,
};
use crate::stats::{cvar, mean, mean_ci};

/// Deliberate defects that make a check fail, to prove the check can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Scales one analytic gradient entry by 1.01.
    Gradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, outcome: Result<String, String>) -> CheckResult {
    match outcome {
        Ok(detail) => CheckResult {
            name,
            passed: true,
            detail,
        },
        Err(detail) => CheckResult {
            name,
            passed: false,
            detail,
        },
    }
}

pub fn run_all(fault: Option<Fault>) -> Vec<CheckResult> {
    vec![
        check("action space sizes", action_spaces()),
        check("observation encoding", observation_encoding()),
        check("score bound", score_bound(20)),
        check("environment determinism", env_determinism()),
        check(
            "gradient vs finite differences",
            gradient_check(fault).map(|e| format!("max rel err {e:.2e}")),
        ),
        check("gae identities", gae_identities()),
        check("confidence interval coverage", ci_coverage(1000)),
        check("cvar tail dominance", cvar_dominance()),
    ]
}

fn action_spaces() -> Result<String, String> {
    let blue: Vec<usize> = BlueAction::all().map(|a| a.index()).collect();
    let red: Vec<usize> = RedAction::all().map(|a| a.index()).collect();
    if blue != (0..NUM_BLUE_ACTIONS).collect::<Vec<_>>() || red != (0..NUM_RED_ACTIONS).collect::<Vec<_>>() {
        return Err("action indices are not contiguous".into());
    }
    Ok(format!("{} blue, {} red", blue.len(), red.len()))
}

fn observation_encoding() -> Result<String, String> {
    let mut steps = 0;
    for red in [RedPolicyName::BLine, RedPolicyName::Meander] {
        let mut env = Environment::new(EnvConfig {
            red_policy_name: red,
            ..EnvConfig::default()
        })
        .map_err(|e| e.to_string())?;
        let mut blue = random_blue(1);
        for ep in 0..5 {
            let mut obs = env.reset(ep);
            loop {
                if obs.values.len() != OBS_DIM {
                    return Err(format!("observation length {}", obs.values.len()));
                }
                let bits = &obs.values[..4 * NUM_HOSTS];
                if bits.iter().any(|&b| b != 0.0 && b != 1.0) {
                    return Err("activity/access slot outside {0,1}".into());
                }
                let scans = &obs.values[4 * NUM_HOSTS..5 * NUM_HOSTS];
                if scans.iter().any(|&s| ![0.0, 1.0, 2.0].contains(&s)) {
                    return Err("scan slot outside {0,1,2}".into());
                }
                if obs.values[5 * NUM_HOSTS..].iter().any(|&d| d < 0.0) {
                    return Err("negative decoy count".into());
                }
                let out = env.step(blue.act(&obs)).map_err(|e| e.to_string())?;
                steps += 1;
                obs = out.observation;
                if out.done {
                    break;
                }
            }
        }
    }
    Ok(format!("{steps} steps checked"))
}

fn score_bound(episodes: u64) -> Result<String, String> {
    let mut worst = f64::NEG_INFINITY;
    for order in [TurnOrder::RedThenBlue, TurnOrder::BlueThenRed, TurnOrder::MixedPerStep] {
        for red in [
            RedPolicyName::BLine,
            RedPolicyName::Meander,
            RedPolicyName::MixedPerEpisode,
        ] {
            let mut env = Environment::new(EnvConfig {
                turn_order: order,
                red_policy_name: red,
                ..EnvConfig::default()
            })
            .map_err(|e| e.to_string())?;
            let mut blue = random_blue(7);
            for ep in 0..episodes {
                let mut obs = env.reset(ep);
                let mut total = 0.0;
                loop {
                    let out = env.step(blue.act(&obs)).map_err(|e| e.to_string())?;
                    if out.reward.total > 0.0 {
                        return Err(format!("positive step reward {}", out.reward.total));
                    }
                    total += out.reward.total;
                    obs = out.observation;
                    if out.done {
                        break;
                    }
                }
                worst = worst.max(total);
            }
        }
    }
    Ok(format!("best episodic return {worst:.1}"))
}

fn env_determinism() -> Result<String, String> {
    let run = || -> Result<Vec<f64>, String> {
        let mut env = Environment::new(EnvConfig {
            turn_order: TurnOrder::MixedPerStep,
            red_policy_name: RedPolicyName::MixedPerEpisode,
            ..EnvConfig::default()
        })
        .map_err(|e| e.to_string())?;
        let mut blue = random_blue(3);
        let mut rewards = Vec::new();
        for ep in 0..3 {
            let mut obs = env.reset(ep);
            loop {
                let out = env.step(blue.act(&obs)).map_err(|e| e.to_string())?;
                rewards.push(out.reward.total);
                rewards.extend(&out.observation.values);
                obs = out.observation;
                if out.done {
                    break;
                }
            }
        }
        Ok(rewards)
    };
    if run()? == run()? {
        Ok("identical replays".into())
    } else {
        Err("replays differ".into())
    }
}

/// Compares the analytic loss gradient with central finite differences on
/// a tiny network. Returns the largest relative error.
pub fn gradient_check(fault: Option<Fault>) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst: f64 = 0.0;
    for arch in [Architecture::Separate, Architecture::Shared] {
        let spec = NetSpec::new(2, 3, vec![2, 2], arch);
        let mut params = PolicyParams::init(spec, &mut rng);
        let noise = Normal::new(0.0, 0.5).expect("valid normal");
        for v in params.data.iter_mut() {
            *v += noise.sample(&mut rng);
        }
        let b = 4;
        let obs: Vec<f64> = (0..b * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let obs_view = ArrayView2::from_shape((b, 2), &obs).expect("shape");
        let actions: Vec<usize> = (0..b).map(|_| rng.random_range(0..3)).collect();
        let old: Vec<f64> = (0..b)
            .map(|i| {
                let lp = log_softmax(&params.policy_logits(&obs[i * 2..i * 2 + 2]));
                lp[actions[i]] + noise.sample(&mut rng) * 0.6
            })
            .collect();
        let adv: Vec<f64> = (0..b).map(|_| rng.random_range(-2.0..2.0)).collect();
        let ret: Vec<f64> = (0..b).map(|_| rng.random_range(-3.0..0.0)).collect();
        let coef = LossCoefficients {
            clip_range: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.01,
        };
        let batch = Minibatch {
            obs: obs_view,
            actions: &actions,
            old_log_probs: &old,
            advantages: &adv,
            returns: &ret,
        };
        let (_, mut grad) = loss_and_grad(&params, &batch, coef);
        if fault == Some(Fault::Gradient) {
            grad[0] *= 1.01;
            grad[0] += 1e-3;
        }
        let h = 1e-5;
        for (i, &g) in grad.iter().enumerate() {
            let orig = params.data[i];
            params.data[i] = orig + h;
            let (plus, _) = loss_and_grad(&params, &batch, coef);
            params.data[i] = orig - h;
            let (minus, _) = loss_and_grad(&params, &batch, coef);
            params.data[i] = orig;
            let numeric = (plus.total - minus.total) / (2.0 * h);
            let denom = g.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((g - numeric).abs() / denom);
        }
    }
    if worst < 1e-4 {
        Ok(worst)
    } else {
        Err(format!("max relative error {worst:.3e} >= 1e-4"))
    }
}

fn gae_identities() -> Result<String, String> {
    let (_, ret) = compute_gae(&[1.0, 1.0, 1.0], &[0.0; 3], &[false, false, true], 0.0, 1.0, 1.0);
    if ret != [3.0, 2.0, 1.0] {
        return Err(format!("monte carlo returns {ret:?}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rewards: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..0.0)).collect();
    let values: Vec<f64> = (0..10).map(|_| rng.random_range(-5.0..0.0)).collect();
    let dones = vec![false; 10];
    let (adv, _) = compute_gae(&rewards, &values, &dones, 0.3, 0.99, 0.0);
    for t in 0..10 {
        let next = if t < 9 { values[t + 1] } else { 0.3 };
        if adv[t] != rewards[t] + 0.99 * next - values[t] {
            return Err(format!("one-step identity fails at {t}"));
        }
    }
    Ok("monte carlo and one-step identities hold".into())
}

fn ci_coverage(trials: usize) -> Result<String, String> {
    let normal = Normal::new(-40.0, 12.0).expect("valid normal");
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let hits = (0..trials)
        .filter(|_| {
            let xs: Vec<f64> = (0..20).map(|_| normal.sample(&mut rng)).collect();
            let (_, lo, hi) = mean_ci(&xs, 0.95).expect("enough samples");
            lo <= -40.0 && -40.0 <= hi
        })
        .count();
    let rate = hits as f64 / trials as f64;
    if (rate - 0.95).abs() <= 0.02 {
        Ok(format!("coverage {:.1}%", rate * 100.0))
    } else {
        Err(format!("coverage {:.1}% outside 93-97%", rate * 100.0))
    }
}

fn cvar_dominance() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let n = rng.random_range(1..30);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..0.0)).collect();
        let alpha = rng.random_range(0.01..1.0);
        let c = cvar(&xs, alpha).map_err(|e| e.to_string())?;
        if c > mean(&xs) + 1e-9 {
            return Err(format!("cvar {c} above mean"));
        }
    }
    if (cvar(&[-1.0, -3.0], 1.0).map_err(|e| e.to_string())? - -2.0).abs() > 0.0 {
        return Err("cvar at alpha 1 differs from mean".into());
    }
    Ok("200 random sets".into())
}
