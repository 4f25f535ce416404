//! Velocity-field network with an optional score head.
//!
//! A plain MLP on `[x, t]` (time appended as a raw scalar feature). The trunk
//! is shared; the velocity head always exists and the score head is optional.
//! Evaluation is a pure function of `(x, t, weights)`: identical inputs give
//! bit-identical outputs, which the checkpoint round-trip relies on.

use crate::error::{CoreError, Result};
use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Anything that can be integrated as a flow: trained networks and analytic
/// oracle fields alike. Batch evaluation at a shared time is the only
/// required method; fields without a score head inherit the default.
pub trait VelocityField: Sync {
    fn data_dim(&self) -> usize;

    fn velocity_batch(&self, xs: &[Vec<f64>], t: f64) -> Result<Vec<Vec<f64>>>;

    fn velocity_and_score_batch(
        &self,
        xs: &[Vec<f64>],
        t: f64,
    ) -> Result<(Vec<Vec<f64>>, Option<Vec<Vec<f64>>>)> {
        Ok((self.velocity_batch(xs, t)?, None))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Silu,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Silu => "silu",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "silu" => Ok(Activation::Silu),
            other => Err(CoreError::Parse(format!("unknown activation `{other}`"))),
        }
    }

    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Silu => z / (1.0 + (-z).exp()),
        }
    }

    fn derivative(&self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 + z * (1.0 - s))
            }
        }
    }
}

/// Architecture of a [`VelocityModel`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Train a score head sharing the trunk.
    pub score_head: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128, 128, 128],
            activation: Activation::Silu,
            score_head: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.iter().any(|&w| w == 0) {
            return Err(CoreError::InvalidConfig(
                "hidden widths must be nonempty and positive".into(),
            ));
        }
        Ok(())
    }
}

/// Dense parameter tensors, one weight matrix and bias per layer.
///
/// Layout: trunk layers first, then the velocity head, then (optionally) the
/// score head. Gradients and optimizer moments reuse the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl ParamSet {
    pub fn zeros_like(other: &ParamSet) -> Self {
        Self {
            weights: other.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            biases: other.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }
}

/// Trainable velocity field `v(x, t)` with an optional score head `s(x, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityModel {
    data_dim: usize,
    hidden: Vec<usize>,
    activation: Activation,
    score_head: bool,
    pub(crate) params: ParamSet,
}

/// Cached forward pass used by backpropagation.
pub(crate) struct ForwardCache {
    input: Array2<f64>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
    pub velocity: Array2<f64>,
    pub score: Option<Array2<f64>>,
}

impl VelocityModel {
    /// Fan-in uniform initialization, deterministic in the provided stream.
    pub fn init(data_dim: usize, config: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        if data_dim == 0 {
            return Err(CoreError::InvalidConfig("data dimension must be positive".into()));
        }
        let mut dims = vec![data_dim + 1];
        dims.extend_from_slice(&config.hidden);

        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for win in dims.windows(2) {
            weights.push(uniform_fan_in(win[0], win[1], rng));
            biases.push(Array1::zeros(win[1]));
        }
        let last = *dims.last().unwrap();
        weights.push(uniform_fan_in(last, data_dim, rng));
        biases.push(Array1::zeros(data_dim));
        if config.score_head {
            weights.push(uniform_fan_in(last, data_dim, rng));
            biases.push(Array1::zeros(data_dim));
        }

        Ok(Self {
            data_dim,
            hidden: config.hidden.clone(),
            activation: config.activation,
            score_head: config.score_head,
            params: ParamSet { weights, biases },
        })
    }

    pub(crate) fn from_parts(
        data_dim: usize,
        hidden: Vec<usize>,
        activation: Activation,
        score_head: bool,
        params: ParamSet,
    ) -> Self {
        Self {
            data_dim,
            hidden,
            activation,
            score_head,
            params,
        }
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn has_score_head(&self) -> bool {
        self.score_head
    }

    fn n_trunk(&self) -> usize {
        self.hidden.len()
    }

    /// Pack a batch of points and a common time into the network input.
    fn pack(&self, xs: &[Vec<f64>], t: f64) -> Result<Array2<f64>> {
        let n = xs.len();
        if n == 0 {
            return Err(CoreError::EmptyBatch);
        }
        let d = self.data_dim;
        let mut input = Array2::zeros((n, d + 1));
        for (i, x) in xs.iter().enumerate() {
            if x.len() != d {
                return Err(CoreError::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
            for j in 0..d {
                input[[i, j]] = x[j];
            }
            input[[i, d]] = t;
        }
        Ok(input)
    }

    pub(crate) fn forward(&self, input: &Array2<f64>) -> ForwardCache {
        let l = self.n_trunk();
        let mut pre = Vec::with_capacity(l);
        let mut post = Vec::with_capacity(l);
        let mut h = input.clone();
        for i in 0..l {
            let z = h.dot(&self.params.weights[i]) + &self.params.biases[i];
            let a = z.mapv(|v| self.activation.apply(v));
            pre.push(z);
            post.push(a.clone());
            h = a;
        }
        let velocity = h.dot(&self.params.weights[l]) + &self.params.biases[l];
        let score = if self.score_head {
            Some(h.dot(&self.params.weights[l + 1]) + &self.params.biases[l + 1])
        } else {
            None
        };
        ForwardCache {
            input: input.clone(),
            pre,
            post,
            velocity,
            score,
        }
    }

    /// Velocity for a batch of points at a common time.
    pub fn velocity_batch(&self, xs: &[Vec<f64>], t: f64) -> Result<Vec<Vec<f64>>> {
        let input = self.pack(xs, t)?;
        let out = self.forward(&input).velocity;
        Ok(rows_to_vecs(&out))
    }

    /// Velocity and (when the head exists) score for a batch at a common time.
    pub fn velocity_and_score_batch(
        &self,
        xs: &[Vec<f64>],
        t: f64,
    ) -> Result<(Vec<Vec<f64>>, Option<Vec<Vec<f64>>>)> {
        let input = self.pack(xs, t)?;
        let cache = self.forward(&input);
        Ok((
            rows_to_vecs(&cache.velocity),
            cache.score.as_ref().map(rows_to_vecs),
        ))
    }

    pub fn velocity(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        Ok(self.velocity_batch(std::slice::from_ref(&x.to_vec()), t)?.remove(0))
    }

    /// Forward pass for a heterogeneous-time batch (one `t` per row).
    pub(crate) fn forward_with_times(&self, xs: &[Vec<f64>], ts: &[f64]) -> Result<ForwardCache> {
        let n = xs.len();
        if n == 0 {
            return Err(CoreError::EmptyBatch);
        }
        if ts.len() != n {
            return Err(CoreError::UnequalBatchSizes(n, ts.len()));
        }
        let d = self.data_dim;
        let mut input = Array2::zeros((n, d + 1));
        for (i, x) in xs.iter().enumerate() {
            if x.len() != d {
                return Err(CoreError::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
            for j in 0..d {
                input[[i, j]] = x[j];
            }
            input[[i, d]] = ts[i];
        }
        Ok(self.forward(&input))
    }

    /// Backpropagate output gradients into a parameter gradient set.
    ///
    /// `d_velocity` and `d_score` are dLoss/dOutput for the two heads.
    pub(crate) fn backward(
        &self,
        cache: &ForwardCache,
        d_velocity: &Array2<f64>,
        d_score: Option<&Array2<f64>>,
    ) -> ParamSet {
        let l = self.n_trunk();
        let mut grads = ParamSet::zeros_like(&self.params);

        let top = if l == 0 { &cache.input } else { &cache.post[l - 1] };

        // Velocity head.
        grads.weights[l] = top.t().dot(d_velocity);
        grads.biases[l] = d_velocity.sum_axis(Axis(0));
        let mut d_hidden = d_velocity.dot(&self.params.weights[l].t());

        // Score head feeds the same trunk output.
        if let Some(ds) = d_score {
            grads.weights[l + 1] = top.t().dot(ds);
            grads.biases[l + 1] = ds.sum_axis(Axis(0));
            d_hidden = d_hidden + ds.dot(&self.params.weights[l + 1].t());
        }

        // Trunk, walking backwards.
        for i in (0..l).rev() {
            let dz = &d_hidden * &cache.pre[i].mapv(|z| self.activation.derivative(z));
            let below = if i == 0 { &cache.input } else { &cache.post[i - 1] };
            grads.weights[i] = below.t().dot(&dz);
            grads.biases[i] = dz.sum_axis(Axis(0));
            d_hidden = dz.dot(&self.params.weights[i].t());
        }
        grads
    }
}

impl VelocityField for VelocityModel {
    fn data_dim(&self) -> usize {
        self.data_dim
    }

    fn velocity_batch(&self, xs: &[Vec<f64>], t: f64) -> Result<Vec<Vec<f64>>> {
        VelocityModel::velocity_batch(self, xs, t)
    }

    fn velocity_and_score_batch(
        &self,
        xs: &[Vec<f64>],
        t: f64,
    ) -> Result<(Vec<Vec<f64>>, Option<Vec<Vec<f64>>>)> {
        VelocityModel::velocity_and_score_batch(self, xs, t)
    }
}

fn uniform_fan_in(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let mut w = Array2::zeros((fan_in, fan_out));
    for i in 0..fan_in {
        for j in 0..fan_out {
            w[[i, j]] = rng.gen_range(-bound..bound);
        }
    }
    w
}

fn rows_to_vecs(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}
