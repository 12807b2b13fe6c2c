//! Oracles shared by the integration and acceptance tests. They re-derive
//! the quantities from scratch instead of calling the library's math.
#![allow(dead_code)]

use acd_core::ppo::{Architecture, LossCoefficients, Minibatch, NetSpec, PolicyParams};
use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tensor<'a>(p: &'a PolicyParams, name: &str) -> (&'a [f64], Vec<usize>) {
    let t = p
        .tensors()
        .iter()
        .find(|t| t.name == name)
        .unwrap_or_else(|| panic!("no tensor {name}"));
    let len: usize = t.shape.iter().product();
    (&p.data[t.offset..t.offset + len], t.shape.clone())
}

/// y = x W + b with W stored row-major as [in, out].
pub fn dense(p: &PolicyParams, name: &str, x: &[f64], relu: bool) -> Vec<f64> {
    let (w, shape) = tensor(p, &format!("{name}.weight"));
    let (b, _) = tensor(p, &format!("{name}.bias"));
    let (n_in, n_out) = (shape[0], shape[1]);
    (0..n_out)
        .map(|j| {
            let mut s = b[j];
            for i in 0..n_in {
                s += x[i] * w[i * n_out + j];
            }
            if relu {
                s.max(0.0)
            } else {
                s
            }
        })
        .collect()
}

pub fn scalar_forward(p: &PolicyParams, x: &[f64]) -> (Vec<f64>, f64) {
    let spec = p.spec();
    let stack = |prefix: &str| {
        let mut h = x.to_vec();
        for i in 0..spec.hidden.len() {
            h = dense(p, &format!("{prefix}.{i}"), &h, true);
        }
        h
    };
    match spec.architecture {
        Architecture::Separate => {
            let hp = stack("policy");
            let hv = stack("value");
            (dense(p, "policy.out", &hp, false), dense(p, "value.out", &hv, false)[0])
        }
        Architecture::Shared => {
            let h = stack("shared");
            (dense(p, "policy.out", &h, false), dense(p, "value.out", &h, false)[0])
        }
    }
}

pub struct Toy {
    pub obs: Vec<f64>,
    pub obs_dim: usize,
    pub actions: Vec<usize>,
    pub old: Vec<f64>,
    pub adv: Vec<f64>,
    pub ret: Vec<f64>,
}

pub fn scalar_loss(p: &PolicyParams, toy: &Toy, c: LossCoefficients) -> f64 {
    let b = toy.actions.len();
    let mut total = 0.0;
    for i in 0..b {
        let (logits, v) = scalar_forward(p, &toy.obs[i * toy.obs_dim..(i + 1) * toy.obs_dim]);
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let logp: Vec<f64> = logits.iter().map(|l| l - max - z.ln()).collect();
        let ratio = (logp[toy.actions[i]] - toy.old[i]).exp();
        let a = toy.adv[i];
        let surrogate = (ratio * a).min(ratio.clamp(1.0 - c.clip_range, 1.0 + c.clip_range) * a);
        let entropy: f64 = -logp.iter().map(|l| l.exp() * l).sum::<f64>();
        total += -surrogate + c.value_coef * (v - toy.ret[i]).powi(2) - c.entropy_coef * entropy;
    }
    total / b as f64
}

pub fn toy_instance(seed: u64, arch: Architecture) -> (PolicyParams, Toy) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = NetSpec::new(2, 3, vec![2, 2], arch);
    let mut p = PolicyParams::init(spec, &mut rng);
    for v in p.data.iter_mut() {
        *v += rng.random_range(-0.8..0.8);
    }
    let obs: Vec<f64> = (0..8).map(|_| rng.random_range(-1.5..1.5)).collect();
    let actions: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();
    let old = (0..4)
        .map(|i| {
            let (logits, _) = scalar_forward(&p, &obs[2 * i..2 * i + 2]);
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            logits[actions[i]] - z.ln() + rng.random_range(-0.4..0.4)
        })
        .collect();
    let adv = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
    let ret = (0..4).map(|_| rng.random_range(-5.0..0.0)).collect();
    (
        p,
        Toy {
            obs,
            obs_dim: 2,
            actions,
            old,
            adv,
            ret,
        },
    )
}

/// A_t = Σ_k (γλ)^k δ_{t+k}, truncated at the first episode end.
pub fn brute_force_gae(r: &[f64], v: &[f64], d: &[bool], last: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    let delta: Vec<f64> = (0..n)
        .map(|t| {
            let next = if t + 1 < n { v[t + 1] } else { last };
            let mask = if d[t] { 0.0 } else { 1.0 };
            r[t] + gamma * next * mask - v[t]
        })
        .collect();
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            let mut w = 1.0;
            for k in t..n {
                sum += w * delta[k];
                if d[k] {
                    break;
                }
                w *= gamma * lambda;
            }
            sum
        })
        .collect()
}

/// Largest relative error between the analytic gradient and central
/// differences of the scalar loss, step `h`.
pub fn max_fd_error(p: &mut PolicyParams, toy: &Toy, coef: LossCoefficients, grad: &[f64], h: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, &g) in grad.iter().enumerate() {
        let orig = p.data[i];
        p.data[i] = orig + h;
        let plus = scalar_loss(p, toy, coef);
        p.data[i] = orig - h;
        let minus = scalar_loss(p, toy, coef);
        p.data[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max((g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-6));
    }
    worst
}

pub fn batch(toy: &Toy) -> Minibatch<'_> {
    Minibatch {
        obs: ArrayView2::from_shape((toy.actions.len(), toy.obs_dim), &toy.obs).unwrap(),
        actions: &toy.actions,
        old_log_probs: &toy.old,
        advantages: &toy.adv,
        returns: &toy.ret,
    }
}
