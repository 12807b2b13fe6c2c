//! Actor-critic MLP over a flat parameter vector, with hand-written
//! reverse-mode gradients.

use nalgebra::DMatrix;
use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// How the policy and value functions share parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Architecture {
    /// Two independent hidden stacks, one per head.
    #[default]
    Separate,
    /// One hidden stack feeding both a policy and a value output layer.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub obs_dim: usize,
    pub n_actions: usize,
    pub hidden: Vec<usize>,
    pub architecture: Architecture,
}

impl NetSpec {
    pub fn new(obs_dim: usize, n_actions: usize, hidden: Vec<usize>, arch: Architecture) -> Self {
        NetSpec {
            obs_dim,
            n_actions,
            hidden,
            architecture: arch,
        }
    }
}

/// Location of one named tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    w: usize,
    b: usize,
    fan_in: usize,
    fan_out: usize,
}

impl Dense {
    fn weights<'a>(&self, data: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.fan_in, self.fan_out), &data[self.w..self.b]).expect("layout matches data")
    }

    fn bias<'a>(&self, data: &'a [f64]) -> &'a [f64] {
        &data[self.b..self.b + self.fan_out]
    }

    fn len(&self) -> usize {
        self.fan_out * (self.fan_in + 1)
    }

    /// `x @ W + b`.
    fn apply(&self, data: &[f64], x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.fan_out));
        for mut row in out.rows_mut() {
            row.as_slice_mut().expect("row-major").copy_from_slice(self.bias(data));
        }
        general_mat_mul(1.0, &x, &self.weights(data), 1.0, &mut out);
        out
    }

    /// Accumulates weight/bias gradients for upstream `d_out`; returns the
    /// gradient with respect to the layer input when `want_input` is set.
    fn backward(
        &self,
        data: &[f64],
        grad: &mut [f64],
        input: ArrayView2<f64>,
        d_out: ArrayView2<f64>,
        want_input: bool,
    ) -> Option<Array2<f64>> {
        {
            let (gw, gb) = grad[self.w..self.b + self.fan_out].split_at_mut(self.b - self.w);
            let mut gw = ArrayViewMut2::from_shape((self.fan_in, self.fan_out), gw).expect("layout matches grad");
            general_mat_mul(1.0, &input.t(), &d_out, 1.0, &mut gw);
            for (g, s) in gb.iter_mut().zip(d_out.sum_axis(Axis(0))) {
                *g += s;
            }
        }
        want_input.then(|| d_out.dot(&self.weights(data).t()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Layout {
    policy_hidden: Vec<Dense>,
    /// Empty for the shared architecture.
    value_hidden: Vec<Dense>,
    policy_out: Dense,
    value_out: Dense,
    tensors: Vec<TensorSpec>,
    len: usize,
}

impl Layout {
    fn new(spec: &NetSpec) -> Self {
        let mut offset = 0;
        let mut tensors = Vec::new();
        let mut dense = |name: String, fan_in: usize, fan_out: usize| {
            let d = Dense {
                w: offset,
                b: offset + fan_in * fan_out,
                fan_in,
                fan_out,
            };
            tensors.push(TensorSpec {
                name: format!("{name}.weight"),
                shape: vec![fan_in, fan_out],
                offset: d.w,
            });
            tensors.push(TensorSpec {
                name: format!("{name}.bias"),
                shape: vec![fan_out],
                offset: d.b,
            });
            offset += d.len();
            d
        };
        let stack = |prefix: &str, dense: &mut dyn FnMut(String, usize, usize) -> Dense| {
            let mut fan_in = spec.obs_dim;
            let mut layers = Vec::new();
            for (i, &h) in spec.hidden.iter().enumerate() {
                layers.push(dense(format!("{prefix}.{i}"), fan_in, h));
                fan_in = h;
            }
            layers
        };
        let last = spec.hidden.last().copied().unwrap_or(spec.obs_dim);
        let (policy_hidden, value_hidden) = match spec.architecture {
            Architecture::Separate => {
                let p = stack("policy", &mut dense);
                let v = stack("value", &mut dense);
                (p, v)
            }
            Architecture::Shared => (stack("shared", &mut dense), Vec::new()),
        };
        let policy_out = dense("policy.out".into(), last, spec.n_actions);
        let value_out = dense("value.out".into(), last, 1);
        Layout {
            policy_hidden,
            value_hidden,
            policy_out,
            value_out,
            tensors,
            len: offset,
        }
    }

    fn value_stack(&self) -> &[Dense] {
        if self.value_hidden.is_empty() {
            &self.policy_hidden
        } else {
            &self.value_hidden
        }
    }

    fn shared(&self) -> bool {
        self.value_hidden.is_empty() && !self.policy_hidden.is_empty()
    }
}

/// Network weights. All tensors live in one flat vector so that gradient
/// clipping, Adam and finite differences work on plain slices.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    spec: NetSpec,
    layout: Layout,
    pub data: Vec<f64>,
}

/// Activations kept for the backward pass.
pub struct ForwardCache {
    /// Input followed by each hidden activation, for the policy stack.
    policy_acts: Vec<Array2<f64>>,
    /// Same for the value stack; empty when shared.
    value_acts: Vec<Array2<f64>>,
    pub logits: Array2<f64>,
    pub values: Array1<f64>,
}

fn relu_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| v.max(0.0));
}

fn run_stack(data: &[f64], layers: &[Dense], x: ArrayView2<f64>) -> Vec<Array2<f64>> {
    let mut acts = vec![x.to_owned()];
    for layer in layers {
        let mut h = layer.apply(data, acts.last().expect("non-empty").view());
        relu_inplace(&mut h);
        acts.push(h);
    }
    acts
}

fn backprop_stack(data: &[f64], grad: &mut [f64], layers: &[Dense], acts: &[Array2<f64>], mut d_h: Array2<f64>) {
    for (i, layer) in layers.iter().enumerate().rev() {
        // ReLU mask: the post-activation is positive exactly where the
        // pre-activation was.
        ndarray::Zip::from(&mut d_h).and(&acts[i + 1]).for_each(|d, &h| {
            if h <= 0.0 {
                *d = 0.0;
            }
        });
        match layer.backward(data, grad, acts[i].view(), d_h.view(), i > 0) {
            Some(d_in) => d_h = d_in,
            None => break,
        }
    }
}

impl PolicyParams {
    pub fn zeros(spec: NetSpec) -> Self {
        let layout = Layout::new(&spec);
        PolicyParams {
            data: vec![0.0; layout.len],
            spec,
            layout,
        }
    }

    pub fn from_data(spec: NetSpec, data: Vec<f64>) -> Option<Self> {
        let layout = Layout::new(&spec);
        (data.len() == layout.len).then_some(PolicyParams { spec, layout, data })
    }

    /// Orthogonal initialization: gain sqrt(2) on hidden layers, 0.01 on the
    /// policy output, 1 on the value output; zero biases.
    pub fn init<R: Rng + ?Sized>(spec: NetSpec, rng: &mut R) -> Self {
        let mut params = PolicyParams::zeros(spec);
        let hidden_gain = 2f64.sqrt();
        let mut layers: Vec<(Dense, f64)> = Vec::new();
        layers.extend(params.layout.policy_hidden.iter().map(|&d| (d, hidden_gain)));
        layers.extend(params.layout.value_hidden.iter().map(|&d| (d, hidden_gain)));
        layers.push((params.layout.policy_out, 0.01));
        layers.push((params.layout.value_out, 1.0));
        for (d, gain) in layers {
            let w = orthogonal(d.fan_in, d.fan_out, gain, rng);
            params.data[d.w..d.b].copy_from_slice(&w);
        }
        params
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.layout.tensors
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Batched forward pass keeping activations for [`PolicyParams::backward`].
    pub fn forward_batch(&self, obs: ArrayView2<f64>) -> ForwardCache {
        let data = &self.data;
        let policy_acts = run_stack(data, &self.layout.policy_hidden, obs);
        let logits = self
            .layout
            .policy_out
            .apply(data, policy_acts.last().expect("non-empty").view());
        let value_acts = if self.layout.shared() {
            Vec::new()
        } else {
            run_stack(data, self.layout.value_stack(), obs)
        };
        let value_feat = value_acts.last().unwrap_or(policy_acts.last().expect("non-empty"));
        let values = self
            .layout
            .value_out
            .apply(data, value_feat.view())
            .column(0)
            .to_owned();
        ForwardCache {
            policy_acts,
            value_acts,
            logits,
            values,
        }
    }

    /// Gradient of a loss whose derivatives with respect to the logits and
    /// values are `d_logits` and `d_values`.
    pub fn backward(&self, cache: &ForwardCache, d_logits: ArrayView2<f64>, d_values: &Array1<f64>) -> Vec<f64> {
        let data = &self.data;
        let l = &self.layout;
        let mut grad = vec![0.0; data.len()];
        let d_v = d_values.view().insert_axis(Axis(1));
        let p_feat = cache.policy_acts.last().expect("non-empty").view();
        let want = !l.policy_hidden.is_empty();
        let d_pf = l.policy_out.backward(data, &mut grad, p_feat, d_logits, want);
        if l.shared() {
            let d_vf = l.value_out.backward(data, &mut grad, p_feat, d_v, true);
            if let (Some(a), Some(b)) = (d_pf, d_vf) {
                backprop_stack(data, &mut grad, &l.policy_hidden, &cache.policy_acts, a + b);
            }
        } else {
            if let Some(d) = d_pf {
                backprop_stack(data, &mut grad, &l.policy_hidden, &cache.policy_acts, d);
            }
            let v_acts = if cache.value_acts.is_empty() {
                &cache.policy_acts
            } else {
                &cache.value_acts
            };
            let v_feat = v_acts.last().expect("non-empty").view();
            let want = !l.value_hidden.is_empty();
            if let Some(d) = l.value_out.backward(data, &mut grad, v_feat, d_v, want) {
                backprop_stack(data, &mut grad, &l.value_hidden, v_acts, d);
            }
        }
        grad
    }

    /// Logits and value for one observation.
    pub fn forward(&self, obs: &[f64]) -> (Vec<f64>, f64) {
        let x = ArrayView2::from_shape((1, obs.len()), obs).expect("row vector");
        let cache = self.forward_batch(x);
        (cache.logits.row(0).to_vec(), cache.values[0])
    }

    /// Logits only, skipping the value stack.
    pub fn policy_logits(&self, obs: &[f64]) -> Vec<f64> {
        let x = ArrayView2::from_shape((1, obs.len()), obs).expect("row vector");
        let acts = run_stack(&self.data, &self.layout.policy_hidden, x);
        self.layout
            .policy_out
            .apply(&self.data, acts.last().expect("non-empty").view())
            .row(0)
            .to_vec()
    }
}

/// A `fan_in x fan_out` matrix (row-major) with orthonormal rows or columns,
/// scaled by `gain`.
fn orthogonal<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let (rows, cols) = (fan_in.max(fan_out), fan_in.min(fan_out));
    let a = DMatrix::<f64>::from_fn(rows, cols, |_, _| rng.sample(StandardNormal));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut out = Vec::with_capacity(fan_in * fan_out);
    for i in 0..fan_in {
        for j in 0..fan_out {
            let v = if fan_in >= fan_out { q[(i, j)] } else { q[(j, i)] };
            out.push(gain * v);
        }
    }
    out
}
