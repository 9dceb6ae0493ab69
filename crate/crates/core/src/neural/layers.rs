//! Parameterized building blocks registered in a [`ParamStore`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::conv::Padding;
use super::graph::{Graph, Var};
use super::tensor::{ParamStore, Tensor};
use crate::error::Result;

/// Uniform Glorot initialization: `U(-l, l)`, `l = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::new(shape, data).expect("glorot shape")
}

#[derive(Debug, Clone)]
pub struct Dense {
    pub w: usize,
    pub b: usize,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, inputs: usize, outputs: usize) -> Result<Self> {
        let w = store.add(
            format!("{name}.weight"),
            glorot_uniform(vec![inputs, outputs], inputs, outputs, rng),
            true,
        )?;
        let b = store.add(format!("{name}.bias"), Tensor::zeros(vec![outputs]), true)?;
        Ok(Self { w, b, inputs, outputs })
    }

    /// Same shape as [`Dense::new`] with all-zero weights.
    pub fn zeroed(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize) -> Result<Self> {
        let w = store.add(format!("{name}.weight"), Tensor::zeros(vec![inputs, outputs]), true)?;
        let b = store.add(format!("{name}.bias"), Tensor::zeros(vec![outputs]), true)?;
        Ok(Self { w, b, inputs, outputs })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let (w, b) = (g.param(self.w), g.param(self.b));
        g.dense(x, w, b)
    }
}

#[derive(Debug, Clone)]
pub struct Lstm {
    pub wx: usize,
    pub wh: usize,
    pub b: usize,
    pub hidden: usize,
}

impl Lstm {
    /// Forget-gate bias starts at 1.
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, inputs: usize, hidden: usize) -> Result<Self> {
        let g4 = 4 * hidden;
        let wx = store.add(
            format!("{name}.input_kernel"),
            glorot_uniform(vec![inputs, g4], inputs, g4, rng),
            true,
        )?;
        let wh = store.add(
            format!("{name}.recurrent_kernel"),
            glorot_uniform(vec![hidden, g4], hidden, g4, rng),
            true,
        )?;
        let mut bias = Tensor::zeros(vec![g4]);
        bias.data_mut()[hidden..2 * hidden].fill(1.0);
        let b = store.add(format!("{name}.bias"), bias, true)?;
        Ok(Self { wx, wh, b, hidden })
    }

    pub fn forward(&self, g: &mut Graph, x: Var, reverse: bool) -> Result<Var> {
        let (wx, wh, b) = (g.param(self.wx), g.param(self.wh), g.param(self.b));
        g.lstm(x, wx, wh, b, reverse)
    }
}

/// Forward and backward LSTMs concatenated per step: `(B, T, D) -> (B, T, 2H)`.
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

impl BiLstm {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, inputs: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            forward: Lstm::new(store, rng, &format!("{name}.fwd"), inputs, hidden)?,
            backward: Lstm::new(store, rng, &format!("{name}.bwd"), inputs, hidden)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.forward.hidden + self.backward.hidden
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let f = self.forward.forward(g, x, false)?;
        let b = self.backward.forward(g, x, true)?;
        g.concat(&[f, b])
    }

    /// Final forward state and final backward state (step 0), `(B, 2H)`.
    pub fn summary(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let steps = g.shape(x)[1];
        let f = self.forward.forward(g, x, false)?;
        let b = self.backward.forward(g, x, true)?;
        let f_last = g.select_step(f, steps - 1)?;
        let b_first = g.select_step(b, 0)?;
        g.concat(&[f_last, b_first])
    }
}

/// Context-vector attention pooling over steps:
/// `u_t = tanh(W h_t + b)`, `score_t = u_t . c`, `alpha = softmax(score)`,
/// output `sum_t alpha_t h_t`.
#[derive(Debug, Clone)]
pub struct AttentionPool {
    pub proj: Dense,
    pub context: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Attended {
    pub pooled: Var,
    pub weights: Var,
}

impl AttentionPool {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, inputs: usize, context_dim: usize) -> Result<Self> {
        let proj = Dense::new(store, rng, &format!("{name}.proj"), inputs, context_dim)?;
        let context = store.add(
            format!("{name}.context"),
            glorot_uniform(vec![context_dim, 1], context_dim, 1, rng),
            true,
        )?;
        Ok(Self { proj, context })
    }

    pub fn forward(&self, g: &mut Graph, h: Var) -> Result<Attended> {
        let s = g.shape(h).to_vec();
        let (batch, steps) = (s[0], s[1]);
        let u = self.proj.forward(g, h)?;
        let u = g.tanh(u);
        let c = g.param(self.context);
        let scores = g.matmul(u, c)?;
        let scores = g.reshape(scores, vec![batch, steps])?;
        let weights = g.softmax_last(scores);
        let pooled = g.weighted_sum_steps(weights, h)?;
        Ok(Attended { pooled, weights })
    }
}

/// Self-attentive BiLSTM encoder: `(B, T, D) -> (B, 2H)`.
#[derive(Debug, Clone)]
pub struct BiLstmAttention {
    pub bilstm: BiLstm,
    pub attention: AttentionPool,
}

impl BiLstmAttention {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        inputs: usize,
        hidden: usize,
        context_dim: usize,
    ) -> Result<Self> {
        let bilstm = BiLstm::new(store, rng, &format!("{name}.bilstm"), inputs, hidden)?;
        let attention = AttentionPool::new(store, rng, &format!("{name}.attention"), 2 * hidden, context_dim)?;
        Ok(Self { bilstm, attention })
    }

    pub fn output_dim(&self) -> usize {
        self.bilstm.output_dim()
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Attended> {
        let h = self.bilstm.forward(g, x)?;
        self.attention.forward(g, h)
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: usize,
    pub beta: usize,
    pub running_mean: usize,
    pub running_var: usize,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::filled(vec![channels], 1.0), true)?,
            beta: store.add(format!("{name}.beta"), Tensor::zeros(vec![channels]), true)?,
            running_mean: store.add(format!("{name}.running_mean"), Tensor::zeros(vec![channels]), false)?,
            running_var: store.add(format!("{name}.running_var"), Tensor::filled(vec![channels], 1.0), false)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let (gamma, beta) = (g.param(self.gamma), g.param(self.beta));
        g.batchnorm(x, gamma, beta, self.running_mean, self.running_var)
    }
}

/// `conv -> [batchnorm] -> relu -> [maxpool] -> [dropout]`.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub w: usize,
    pub b: usize,
    pub padding: Padding,
    pub bn: Option<BatchNorm>,
    pub pool: Option<(usize, usize)>,
    pub dropout: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ConvSpec {
    pub kernel: (usize, usize),
    pub filters: usize,
    pub pool: Option<(usize, usize)>,
}

impl ConvBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_channels: usize,
        spec: ConvSpec,
        padding: Padding,
        batchnorm: bool,
        dropout: f64,
    ) -> Result<Self> {
        let (kh, kw) = spec.kernel;
        let w = store.add(
            format!("{name}.kernel"),
            glorot_uniform(
                vec![kh, kw, in_channels, spec.filters],
                kh * kw * in_channels,
                kh * kw * spec.filters,
                rng,
            ),
            true,
        )?;
        let b = store.add(format!("{name}.bias"), Tensor::zeros(vec![spec.filters]), true)?;
        let bn = if batchnorm {
            Some(BatchNorm::new(store, &format!("{name}.bn"), spec.filters)?)
        } else {
            None
        };
        Ok(Self {
            w,
            b,
            padding,
            bn,
            pool: spec.pool,
            dropout,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let (w, b) = (g.param(self.w), g.param(self.b));
        let mut h = g.conv2d(x, w, b, self.padding)?;
        if let Some(bn) = &self.bn {
            h = bn.forward(g, h)?;
        }
        h = g.relu(h);
        if let Some((ph, pw)) = self.pool {
            h = g.maxpool2d(h, ph, pw)?;
        }
        Ok(g.dropout(h, self.dropout))
    }
}
