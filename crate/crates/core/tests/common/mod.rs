//! Shared helpers for the integration tests: a central finite-difference
//! gradient checker and the per-layer cases it runs on.

#![allow(dead_code)]

use intent_sieve::models::{Batch, Model, ModelConfig, ModelKind};
use intent_sieve::neural::layers::{AttentionPool, BiLstm, Dense};
use intent_sieve::neural::{Graph, Mode, Padding, ParamStore, Tensor, Var};
use intent_sieve::Result;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
pub const FLOOR: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct FdReport {
    pub name: String,
    pub checked: usize,
    pub max_rel: f64,
}

#[derive(Clone, Copy)]
enum Coord {
    Param(usize, usize),
    Leaf(usize, usize),
}

pub fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng, scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// Compares reverse-mode gradients of `sum(r * build(..))` for a fixed
/// random `r` against central differences, on at least `min_coords`
/// randomly chosen parameter and input coordinates.
pub fn fd_check<F>(
    name: &str,
    mut store: ParamStore,
    mut leaves: Vec<Tensor>,
    mode: Mode,
    min_coords: usize,
    seed: u64,
    build: F,
) -> FdReport
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out_len = {
        let mut g = Graph::new(&store, mode, seed);
        let vs: Vec<Var> = leaves.iter().map(|t| g.leaf(t.clone())).collect();
        let out = build(&mut g, &vs).unwrap();
        g.value(out).len()
    };
    let r: Vec<f64> = (0..out_len).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let eval = |store: &ParamStore, leaves: &[Tensor]| -> f64 {
        let mut g = Graph::new(store, mode, seed);
        let vs: Vec<Var> = leaves.iter().map(|t| g.input(t.clone())).collect();
        let out = build(&mut g, &vs).unwrap();
        g.value(out).iter().zip(&r).map(|(a, b)| a * b).sum()
    };

    let (param_grads, leaf_grads) = {
        let mut g = Graph::new(&store, mode, seed);
        let vs: Vec<Var> = leaves.iter().map(|t| g.leaf(t.clone())).collect();
        let out = build(&mut g, &vs).unwrap();
        let flat = g.reshape(out, vec![1, out_len]).unwrap();
        let proj = g.input(Tensor::new(vec![out_len, 1], r.clone()).unwrap());
        let loss = g.matmul(flat, proj).unwrap();
        let grads = g.backward(loss).unwrap();
        let leaf_grads: Vec<Vec<f64>> = vs
            .iter()
            .map(|&v| grads.of(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; 0]))
            .collect();
        (grads.params, leaf_grads)
    };

    let mut coords = Vec::new();
    for (id, g) in &param_grads {
        coords.extend((0..g.len()).map(|i| Coord::Param(*id, i)));
    }
    for (j, t) in leaves.iter().enumerate() {
        coords.extend((0..t.len()).map(|i| Coord::Leaf(j, i)));
    }
    assert!(
        coords.len() >= min_coords,
        "{name}: only {} differentiable coordinates",
        coords.len()
    );
    coords.shuffle(&mut rng);
    coords.truncate(min_coords);

    let mut max_rel: f64 = 0.0;
    for &c in &coords {
        let analytic = match c {
            Coord::Param(id, i) => param_grads.iter().find(|(p, _)| *p == id).unwrap().1[i],
            Coord::Leaf(j, i) => leaf_grads[j].get(i).copied().unwrap_or(0.0),
        };
        let nudge = |delta: f64, store: &mut ParamStore, leaves: &mut Vec<Tensor>| match c {
            Coord::Param(id, i) => store.get_mut(id).tensor.data_mut()[i] += delta,
            Coord::Leaf(j, i) => leaves[j].data_mut()[i] += delta,
        };
        nudge(STEP, &mut store, &mut leaves);
        let up = eval(&store, &leaves);
        nudge(-2.0 * STEP, &mut store, &mut leaves);
        let down = eval(&store, &leaves);
        nudge(STEP, &mut store, &mut leaves);
        let numeric = (up - down) / (2.0 * STEP);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
        max_rel = max_rel.max(rel);
    }
    FdReport {
        name: name.to_string(),
        checked: coords.len(),
        max_rel,
    }
}

const N: usize = 100;

pub fn check_dense() -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    let d = Dense::new(&mut store, &mut rng, "d", 8, 6).unwrap();
    let x = random_tensor(vec![6, 8], &mut rng, 1.0);
    fd_check("dense", store, vec![x], Mode::Train, N, 11, |g, v| d.forward(g, v[0]))
}

pub fn check_relu_tanh() -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_tensor(vec![8, 20], &mut rng, 2.0);
    fd_check("relu+tanh", ParamStore::new(), vec![x], Mode::Train, N, 12, |g, v| {
        let a = g.relu(v[0]);
        let b = g.tanh(v[0]);
        g.concat(&[a, b])
    })
}

pub fn check_dropout() -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_tensor(vec![10, 15], &mut rng, 1.0);
    fd_check("dropout", ParamStore::new(), vec![x], Mode::Train, N, 13, |g, v| Ok(g.dropout(v[0], 0.3)))
}

pub fn check_concat_softmax() -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = random_tensor(vec![7, 7], &mut rng, 2.0);
    let b = random_tensor(vec![7, 9], &mut rng, 2.0);
    fd_check("concat+softmax", ParamStore::new(), vec![a, b], Mode::Train, N, 14, |g, v| {
        let c = g.concat(&[v[0], v[1]])?;
        Ok(g.softmax_last(c))
    })
}

pub fn check_steps() -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let alpha = random_tensor(vec![3, 6], &mut rng, 1.0);
    let h = random_tensor(vec![3, 6, 5], &mut rng, 1.0);
    fd_check("select_step+weighted_sum", ParamStore::new(), vec![alpha, h], Mode::Train, N, 15, |g, v| {
        let s = g.weighted_sum_steps(v[0], v[1])?;
        let last = g.select_step(v[1], 5)?;
        let first = g.select_step(v[1], 0)?;
        g.concat(&[s, last, first])
    })
}

pub fn check_cross_entropy() -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let logits = random_tensor(vec![20, 7], &mut rng, 3.0);
    let labels: Vec<usize> = (0..20).map(|i| (i * 3) % 7).collect();
    let weights = [0.5, 1.0, 2.0, 1.5, 0.7, 3.0, 1.1];
    fd_check("weighted_cross_entropy", ParamStore::new(), vec![logits], Mode::Train, N, 16, move |g, v| {
        g.weighted_cross_entropy(v[0], &labels, &weights)
    })
}

fn conv_case(name: &str, padding: Padding, seed: u64) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let w = store.add("w", random_tensor(vec![3, 3, 2, 4], &mut rng, 0.5), true).unwrap();
    let b = store.add("b", random_tensor(vec![4], &mut rng, 0.5), true).unwrap();
    let x = random_tensor(vec![2, 6, 5, 2], &mut rng, 1.0);
    fd_check(name, store, vec![x], Mode::Train, N, seed, |g, v| {
        let (wv, bv) = (g.param(w), g.param(b));
        g.conv2d(v[0], wv, bv, padding)
    })
}

pub fn check_conv_same() -> FdReport {
    conv_case("conv2d (same)", Padding::Same, 17)
}

pub fn check_conv_valid() -> FdReport {
    conv_case("conv2d (valid)", Padding::Valid, 18)
}

pub fn check_maxpool() -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let x = random_tensor(vec![2, 7, 6, 3], &mut rng, 1.0);
    fd_check("maxpool2d", ParamStore::new(), vec![x], Mode::Train, N, 19, |g, v| g.maxpool2d(v[0], 2, 2))
}

pub fn check_batchnorm() -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut store = ParamStore::new();
    let gamma = store.add("gamma", random_tensor(vec![4], &mut rng, 1.0), true).unwrap();
    let beta = store.add("beta", random_tensor(vec![4], &mut rng, 1.0), true).unwrap();
    let mean = store.add("mean", Tensor::zeros(vec![4]), false).unwrap();
    let var = store.add("var", Tensor::filled(vec![4], 1.0), false).unwrap();
    let x = random_tensor(vec![5, 6, 4], &mut rng, 2.0);
    fd_check("batchnorm", store, vec![x], Mode::Train, N, 20, |g, v| {
        let (gv, bv) = (g.param(gamma), g.param(beta));
        g.batchnorm(v[0], gv, bv, mean, var)
    })
}

fn lstm_case(name: &str, reverse: bool, seed: u64) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let (d, h) = (4, 3);
    let wx = store.add("wx", random_tensor(vec![d, 4 * h], &mut rng, 0.6), true).unwrap();
    let wh = store.add("wh", random_tensor(vec![h, 4 * h], &mut rng, 0.6), true).unwrap();
    let b = store.add("b", random_tensor(vec![4 * h], &mut rng, 0.6), true).unwrap();
    let x = random_tensor(vec![2, 5, d], &mut rng, 1.0);
    fd_check(name, store, vec![x], Mode::Train, N, seed, |g, v| {
        let (a, bb, c) = (g.param(wx), g.param(wh), g.param(b));
        g.lstm(v[0], a, bb, c, reverse)
    })
}

pub fn check_lstm_forward() -> FdReport {
    lstm_case("lstm (forward)", false, 21)
}

pub fn check_lstm_reverse() -> FdReport {
    lstm_case("lstm (reverse)", true, 22)
}

pub fn check_bilstm_attention() -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut store = ParamStore::new();
    let rnn = BiLstm::new(&mut store, &mut rng, "rnn", 3, 4).unwrap();
    let att = AttentionPool::new(&mut store, &mut rng, "att", 8, 5).unwrap();
    let x = random_tensor(vec![2, 6, 3], &mut rng, 1.0);
    fd_check("bilstm+attention", store, vec![x], Mode::Train, N, 23, |g, v| {
        let h = rnn.forward(g, v[0])?;
        let a = att.forward(g, h)?;
        let s = rnn.summary(g, v[0])?;
        g.concat(&[a.pooled, a.weights, s])
    })
}

/// A shrunken audio-text model end to end, including batchnorm and dropout.
pub fn check_three_a_model() -> FdReport {
    let cfg = ModelConfig {
        text_len: 8,
        text_dim: 6,
        audio_frames: 32,
        audio_bins: 16,
        lstm_hidden: 4,
        context_dim: 4,
        fusion_proj_dim: 8,
        mlp_hidden: 64,
        ..ModelConfig::for_kind(ModelKind::ThreeA)
    };
    let model = Model::new(ModelKind::ThreeA, cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let text = random_tensor(vec![2, 8, 6], &mut rng, 1.0);
    let audio = random_tensor(vec![2, 32, 16], &mut rng, 1.0);
    let batch = Batch {
        text: Some(text),
        audio: Some(audio),
    };
    let store = model.params().clone();
    fd_check("three_a model", store, Vec::new(), Mode::Train, N, 24, |g, _| {
        model.forward(g, &batch).map(|o| o.logits)
    })
}

pub fn all_layer_checks() -> Vec<FdReport> {
    vec![
        check_dense(),
        check_relu_tanh(),
        check_dropout(),
        check_concat_softmax(),
        check_steps(),
        check_cross_entropy(),
        check_conv_same(),
        check_conv_valid(),
        check_maxpool(),
        check_batchnorm(),
        check_lstm_forward(),
        check_lstm_reverse(),
        check_bilstm_attention(),
        check_three_a_model(),
    ]
}
