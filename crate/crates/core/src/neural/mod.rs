//! Minimal reverse-mode autodiff with exactly the layers the models need:
//! dense, conv2d, max pooling, batchnorm, LSTM, attention pooling, dropout,
//! softmax and weighted cross-entropy. All arithmetic is `f64`.

mod adam;
pub mod checkpoint;
mod conv;
mod gemm;
mod graph;
pub mod layers;
mod lstm;
mod ops;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use conv::{conv_output_hw, Padding, BN_EPS, BN_MOMENTUM};
pub use graph::{Gradients, Graph, Mode, StatUpdate, Var};
pub use ops::{softmax, softmax_in_place, weighted_cross_entropy};
pub use tensor::{ParamStore, Parameter, Tensor};

/// Seed for parameter initialization and dropout masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct RngSeed(pub u64);

impl Default for RngSeed {
    fn default() -> Self {
        RngSeed(42)
    }
}

#[cfg(test)]
mod tests {
    use super::layers::*;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        Tensor::new(shape, data).unwrap()
    }

    fn random(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        t(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn uniform_logits_cross_entropy_is_ln_k() {
        let l = weighted_cross_entropy(&[0.0; 7], 3, &[1.0; 7]).unwrap();
        assert!((l - 7f64.ln()).abs() < 1e-12);
        assert!((l - 1.9459).abs() < 1e-4);
        let mut w = [1.0; 7];
        w[3] = 2.0;
        let l2 = weighted_cross_entropy(&[0.0; 7], 3, &w).unwrap();
        assert!((l2 - 2.0 * l).abs() < 1e-12);
        assert!(matches!(
            weighted_cross_entropy(&[0.0; 7], 7, &[1.0; 7]),
            Err(crate::Error::InvalidInput(_))
        ));
    }

    #[test]
    fn graph_cross_entropy_matches_scalar_version() {
        let store = ParamStore::new();
        let mut g = Graph::inference(&store);
        let logits = g.input(t(vec![2, 3], vec![0.1, -0.3, 2.0, 1.0, 1.0, 0.5]));
        let loss = g.weighted_cross_entropy(logits, &[2, 0], &[1.0, 2.0, 0.5]).unwrap();
        let a = weighted_cross_entropy(&[0.1, -0.3, 2.0], 2, &[1.0, 2.0, 0.5]).unwrap();
        let b = weighted_cross_entropy(&[1.0, 1.0, 0.5], 0, &[1.0, 2.0, 0.5]).unwrap();
        assert!((g.value(loss)[0] - (a + b) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn dropout_is_identity_in_inference() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store, Mode::Infer, 1);
        let x = g.input(t(vec![4], vec![1.0, 2.0, 3.0, 4.0]));
        let y = g.dropout(x, 0.3);
        assert_eq!(g.value(y), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn dropout_masks_are_seeded() {
        let store = ParamStore::new();
        let run = |seed| {
            let mut g = Graph::new(&store, Mode::Train, seed);
            let x = g.input(Tensor::filled(vec![64], 1.0));
            let y = g.dropout(x, 0.3);
            g.value(y).to_vec()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
        let v = run(5);
        assert!(v.iter().all(|&x| x == 0.0 || (x - 1.0 / 0.7).abs() < 1e-12));
    }

    #[test]
    fn concat_feature_axis() {
        let store = ParamStore::new();
        let mut g = Graph::inference(&store);
        let a = g.input(Tensor::filled(vec![128], 1.0));
        let b = g.input(Tensor::filled(vec![128], 2.0));
        let c = g.concat(&[a, b]).unwrap();
        assert_eq!(g.shape(c), &[256]);
        assert_eq!(g.value(c)[127], 1.0);
        assert_eq!(g.value(c)[128], 2.0);
    }

    #[test]
    fn conv_same_shape_and_identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let w = store.add("w", t(vec![1, 1, 1, 1], vec![1.0]), true).unwrap();
        let b = store.add("b", Tensor::zeros(vec![1]), true).unwrap();
        let w5 = store.add("w5", random(vec![5, 5, 1, 32], &mut rng), true).unwrap();
        let b5 = store.add("b5", random(vec![32], &mut rng), true).unwrap();
        let mut g = Graph::inference(&store);
        let x = random(vec![1, 6, 7, 1], &mut rng);
        let xv = g.input(x.clone());
        let (wv, bv) = (g.param(w), g.param(b));
        let y = g.conv2d(xv, wv, bv, Padding::Same).unwrap();
        assert_eq!(g.value(y), x.data());

        let zero = g.input(Tensor::zeros(vec![1, 300, 129, 1]));
        let (wv, bv) = (g.param(w5), g.param(b5));
        let y = g.conv2d(zero, wv, bv, Padding::Same).unwrap();
        assert_eq!(g.shape(y), &[1, 300, 129, 32]);
        let bias = store.get(b5).tensor.data();
        for px in g.value(y).chunks(32) {
            assert_eq!(px, bias);
        }
    }

    #[test]
    fn conv_matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (h, w, ci, co, kh, kw) = (6, 5, 2, 3, 3, 2);
        let x = random(vec![2, h, w, ci], &mut rng);
        let k = random(vec![kh, kw, ci, co], &mut rng);
        let bias = random(vec![co], &mut rng);
        let mut store = ParamStore::new();
        let kid = store.add("k", k.clone(), true).unwrap();
        let bid = store.add("b", bias.clone(), true).unwrap();
        for padding in [Padding::Same, Padding::Valid] {
            let mut g = Graph::inference(&store);
            let xv = g.input(x.clone());
            let (kv, bv) = (g.param(kid), g.param(bid));
            let y = g.conv2d(xv, kv, bv, padding).unwrap();
            let (pt, pl, ho, wo) = match padding {
                Padding::Same => ((kh - 1) / 2, (kw - 1) / 2, h, w),
                Padding::Valid => (0, 0, h - kh + 1, w - kw + 1),
            };
            assert_eq!(g.shape(y), &[2, ho, wo, co]);
            for bi in 0..2 {
                for oy in 0..ho {
                    for ox in 0..wo {
                        for o in 0..co {
                            let mut s = bias.data()[o];
                            for dy in 0..kh {
                                for dx in 0..kw {
                                    let iy = oy as isize + dy as isize - pt as isize;
                                    let ix = ox as isize + dx as isize - pl as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    for c in 0..ci {
                                        let xi = ((bi * h + iy as usize) * w + ix as usize) * ci + c;
                                        let ki = ((dy * kw + dx) * ci + c) * co + o;
                                        s += x.data()[xi] * k.data()[ki];
                                    }
                                }
                            }
                            let got = g.value(y)[((bi * ho + oy) * wo + ox) * co + o];
                            assert!((got - s).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn conv_channel_mismatch_is_shape_error() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::zeros(vec![3, 3, 2, 4]), true).unwrap();
        let b = store.add("b", Tensor::zeros(vec![4]), true).unwrap();
        let mut g = Graph::inference(&store);
        let x = g.input(Tensor::zeros(vec![1, 5, 5, 3]));
        let (wv, bv) = (g.param(w), g.param(b));
        assert!(matches!(g.conv2d(x, wv, bv, Padding::Same), Err(crate::Error::Shape(_))));
    }

    #[test]
    fn maxpool_shapes_and_ties() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store, Mode::Train, 0);
        let x = g.leaf(Tensor::zeros(vec![1, 300, 129, 2]));
        let y = g.maxpool2d(x, 2, 2).unwrap();
        assert_eq!(g.shape(y), &[1, 150, 64, 2]);
        let x2 = g.input(Tensor::zeros(vec![1, 9, 16, 32]));
        let y2 = g.maxpool2d(x2, 2, 1).unwrap();
        assert_eq!(g.shape(y2), &[1, 4, 16, 32]);
        let c = g.input(Tensor::filled(vec![1, 4, 4, 1], 3.0));
        let yc = g.maxpool2d(c, 2, 2).unwrap();
        assert!(g.value(yc).iter().all(|&v| v == 3.0));
        assert!(g.maxpool2d(c, 5, 1).is_err());

        // ties route the gradient to the first element in row-major order
        let tie = g.leaf(Tensor::filled(vec![1, 2, 2, 1], 1.0));
        let yt = g.maxpool2d(tie, 2, 2).unwrap();
        let s = g.reshape(yt, vec![1]).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.of(tie).unwrap(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn batchnorm_train_standardizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let bn = BatchNorm::new(&mut store, "bn", 3).unwrap();
        let data: Vec<f64> = (0..4 * 5 * 3).map(|i| 5.0 * rng.gen_range(-1.0..1.0) + (i % 3) as f64 * 10.0).collect();
        let mut g = Graph::new(&store, Mode::Train, 0);
        let x = g.input(t(vec![4, 5, 3], data));
        let y = bn.forward(&mut g, x).unwrap();
        let v = g.value(y);
        for c in 0..3 {
            let col: Vec<f64> = v.iter().skip(c).step_by(3).copied().collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-5, "var {var}");
        }
        let updates = g.take_stat_updates();
        assert_eq!(updates.len(), 2);
    }

    #[test]
    fn batchnorm_infer_on_running_stats() {
        let mut store = ParamStore::new();
        let bn = BatchNorm::new(&mut store, "bn", 2).unwrap();
        store.get_mut(bn.running_mean).tensor.data_mut().copy_from_slice(&[1.0, -2.0]);
        store.get_mut(bn.running_var).tensor.data_mut().copy_from_slice(&[4.0, 9.0]);
        let mut g = Graph::inference(&store);
        let x = g.input(t(vec![1, 2], vec![1.0 + 2.0, -2.0 - 3.0]));
        let y = bn.forward(&mut g, x).unwrap();
        let want = [2.0 / (4.0 + BN_EPS).sqrt(), -3.0 / (9.0 + BN_EPS).sqrt()];
        for (a, b) in g.value(y).iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn batchnorm_single_value_per_channel_rejected_in_train() {
        let mut store = ParamStore::new();
        let bn = BatchNorm::new(&mut store, "bn", 2).unwrap();
        let mut g = Graph::new(&store, Mode::Train, 0);
        let x = g.input(Tensor::zeros(vec![1, 2]));
        assert!(bn.forward(&mut g, x).is_err());
    }

    #[test]
    fn bilstm_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let enc = BiLstm::new(&mut store, &mut rng, "l", 100, 64).unwrap();
        let mut g = Graph::inference(&store);
        let x = g.input(random(vec![1, 50, 100], &mut rng));
        let y = enc.forward(&mut g, x).unwrap();
        assert_eq!(g.shape(y), &[1, 50, 128]);
        let x1 = g.input(random(vec![2, 1, 100], &mut rng));
        let y1 = enc.forward(&mut g, x1).unwrap();
        assert_eq!(g.shape(y1), &[2, 1, 128]);
    }

    /// Crafted weights: zero kernels, biases saturate i and o open, f closed,
    /// candidate pre-activation 0.5. One step gives c = sigma(20) * tanh(0.5).
    #[test]
    fn lstm_cell_hand_computed() {
        let mut store = ParamStore::new();
        let h = 2;
        let wx = store.add("wx", Tensor::zeros(vec![3, 4 * h]), true).unwrap();
        let wh = store.add("wh", Tensor::zeros(vec![h, 4 * h]), true).unwrap();
        let bias = vec![20.0, 20.0, -20.0, -20.0, 0.5, 0.5, 20.0, 20.0];
        let b = store.add("b", t(vec![4 * h], bias), true).unwrap();
        let mut g = Graph::inference(&store);
        let x = g.input(Tensor::filled(vec![1, 2, 3], 0.7));
        let (a, c, d) = (g.param(wx), g.param(wh), g.param(b));
        let y = g.lstm(x, a, c, d, false).unwrap();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let c1 = sig(20.0) * 0.5f64.tanh();
        let h1 = sig(20.0) * c1.tanh();
        let c2 = sig(-20.0) * c1 + sig(20.0) * 0.5f64.tanh();
        let h2 = sig(20.0) * c2.tanh();
        let v = g.value(y);
        assert!((v[0] - h1).abs() < 1e-12);
        assert!((v[2] - h2).abs() < 1e-12);
    }

    #[test]
    fn attention_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let att = AttentionPool::new(&mut store, &mut rng, "att", 128, 64).unwrap();
        let mut g = Graph::inference(&store);

        let h = random(vec![3, 7, 128], &mut rng);
        let hv = g.input(h);
        let out = att.forward(&mut g, hv).unwrap();
        assert_eq!(g.shape(out.pooled), &[3, 128]);
        for row in g.value(out.weights).chunks(7) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        let single = random(vec![1, 1, 128], &mut rng);
        let sv = g.input(single.clone());
        let out = att.forward(&mut g, sv).unwrap();
        assert_eq!(g.value(out.pooled), single.data());

        let row = random(vec![128], &mut rng);
        let same: Vec<f64> = (0..5).flat_map(|_| row.data().to_vec()).collect();
        let same = g.input(t(vec![1, 5, 128], same));
        let out = att.forward(&mut g, same).unwrap();
        for &a in g.value(out.weights) {
            assert!((a - 0.2).abs() < 1e-12);
        }
    }
}
