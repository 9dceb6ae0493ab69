//! Mini-batch training with class-weighted cross-entropy and Adam.

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::class_weights;
use crate::dsp::AcousticFeature;
use crate::error::{Error, Result};
use crate::eval::{confusion, metrics};
use crate::models::{argmax_label, Batch, Model};
use crate::neural::{AdamConfig, AdamState, Graph, Mode};
use crate::textenc::CharSequenceFeature;

/// One featurized training item; `label` is a class code in the model's
/// label space.
#[derive(Debug, Clone)]
pub struct Example {
    pub text: Option<CharSequenceFeature>,
    pub audio: Option<AcousticFeature>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Overrides the weights derived from the training split.
    pub class_weights: Option<Vec<f64>>,
    /// Stop once training accuracy, measured in inference mode, reaches this.
    pub stop_at_train_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            adam: AdamConfig::default(),
            seed: 42,
            class_weights: None,
            stop_at_train_accuracy: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    /// Running accuracy of the train-mode forward passes.
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
    pub val_macro_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub class_weights: Vec<f64>,
    /// Inference-mode accuracy on the training split at the end.
    pub final_train_accuracy: f64,
    pub stopped_early: bool,
}

fn make_batch(model: &Model, items: &[&Example]) -> Result<Batch> {
    let kind = model.kind();
    let text = if kind.uses_text() {
        let ts = items
            .iter()
            .map(|e| e.text.as_ref().ok_or_else(|| Error::invalid(format!("{kind} needs text features"))))
            .collect::<Result<Vec<_>>>()?;
        Some(ts)
    } else {
        None
    };
    let audio = if kind.uses_audio() {
        let az = items
            .iter()
            .map(|e| e.audio.as_ref().ok_or_else(|| Error::invalid(format!("{kind} needs audio features"))))
            .collect::<Result<Vec<_>>>()?;
        Some(az)
    } else {
        None
    };
    Batch::from_features(text.as_deref(), audio.as_deref())
}

/// Inference-mode class probabilities, `batch_size` rows at a time.
pub fn predict(model: &Model, examples: &[Example], batch_size: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(batch_size.max(1)) {
        let refs: Vec<&Example> = chunk.iter().collect();
        let batch = make_batch(model, &refs)?;
        out.extend(model.predict_proba_batch(&batch, Mode::Infer, 0)?);
    }
    Ok(out)
}

pub fn predict_labels(model: &Model, examples: &[Example], batch_size: usize) -> Result<Vec<usize>> {
    Ok(predict(model, examples, batch_size)?.iter().map(|p| argmax_label(p)).collect())
}

fn accuracy(preds: &[usize], examples: &[Example]) -> f64 {
    let hits = preds.iter().zip(examples).filter(|(p, e)| **p == e.label).count();
    hits as f64 / examples.len().max(1) as f64
}

/// Shuffled index batches; a trailing single-item batch joins the previous
/// one so batch statistics never come from one example.
fn batches(n: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut out: Vec<Vec<usize>> = idx.chunks(size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().map_or(false, |b| b.len() == 1) {
        let last = out.pop().unwrap();
        out.last_mut().unwrap().extend(last);
    }
    out
}

pub fn train_model(model: &mut Model, train: &[Example], val: &[Example], cfg: &TrainConfig) -> Result<TrainReport> {
    if train.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be positive".into()));
    }
    let k = model.num_classes();
    if let Some(e) = train.iter().chain(val).find(|e| e.label >= k) {
        return Err(Error::invalid(format!("label {} outside the model's {k} classes", e.label)));
    }
    let weights = match &cfg.class_weights {
        Some(w) if w.len() == k => w.clone(),
        Some(w) => return Err(Error::InvalidConfig(format!("{} class weights for {k} classes", w.len()))),
        None => {
            let mut counts = vec![0; k];
            train.iter().for_each(|e| counts[e.label] += 1);
            class_weights(&counts).map_err(|_| {
                let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
                Error::invalid(format!("classes {empty:?} have no training examples"))
            })?
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(cfg.adam, model.params());
    let mut logs = Vec::new();
    let mut stopped_early = false;
    let mut final_acc = None;
    for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        for idx in batches(train.len(), cfg.batch_size, &mut rng) {
            let items: Vec<&Example> = idx.iter().map(|&i| &train[i]).collect();
            let labels: Vec<usize> = items.iter().map(|e| e.label).collect();
            let batch = make_batch(model, &items)?;
            let step_seed = cfg.seed ^ (adam.step_count() + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let (grads, stats) = {
                let mut g = Graph::new(model.params(), Mode::Train, step_seed);
                let out = model.forward(&mut g, &batch)?;
                let logits = g.value(out.logits);
                hits += logits
                    .chunks(k)
                    .zip(&labels)
                    .filter(|(row, &y)| argmax_label(row) == y)
                    .count();
                let loss = g.weighted_cross_entropy(out.logits, &labels, &weights)?;
                let l = g.value(loss)[0];
                if !l.is_finite() {
                    return Err(Error::TrainingDiverged(format!("loss {l} at epoch {epoch}")));
                }
                loss_sum += l * labels.len() as f64;
                let stats = g.take_stat_updates();
                (g.backward(loss)?, stats)
            };
            adam.step(model.params_mut(), &grads.params)?;
            for u in stats {
                model.params_mut().get_mut(u.param).tensor.data_mut().copy_from_slice(&u.values);
            }
        }
        let train_accuracy = hits as f64 / train.len() as f64;
        let (val_accuracy, val_macro_f1) = if val.is_empty() {
            (None, None)
        } else {
            let preds = predict_labels(model, val, cfg.batch_size)?;
            let answers: Vec<usize> = val.iter().map(|e| e.label).collect();
            let r = metrics(&confusion(&preds, &answers, k)?)?;
            (Some(r.accuracy), Some(r.macro_f1))
        };
        let log = EpochLog {
            epoch,
            loss: loss_sum / train.len() as f64,
            train_accuracy,
            val_accuracy,
            val_macro_f1,
        };
        info!(
            "epoch {epoch}: loss {:.5} train acc {:.4} val acc {} val F1 {}",
            log.loss,
            log.train_accuracy,
            fmt_opt(log.val_accuracy),
            fmt_opt(log.val_macro_f1)
        );
        logs.push(log);
        if let Some(target) = cfg.stop_at_train_accuracy {
            // dropout makes the running accuracy pessimistic, so confirm
            // in inference mode once it gets close
            if train_accuracy >= 0.9 * target {
                let acc = accuracy(&predict_labels(model, train, cfg.batch_size)?, train);
                if acc >= target {
                    final_acc = Some(acc);
                    stopped_early = epoch < cfg.epochs;
                    break;
                }
            }
        }
    }
    let final_train_accuracy = match final_acc {
        Some(a) => a,
        None => accuracy(&predict_labels(model, train, cfg.batch_size)?, train),
    };
    Ok(TrainReport {
        epochs: logs,
        class_weights: weights,
        final_train_accuracy,
        stopped_early,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}
