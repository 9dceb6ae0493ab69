//! The two-stage router: the text sieve labels every utterance, and only
//! those it calls intonation-dependent pay for acoustic features and the
//! audio-text model.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::labels::{IntentLabel6, IntentLabel7};

use crate::dsp::{extract_feature, read_wav, FeatureConfig, Waveform};
use crate::error::{Error, Result};
use crate::models::{argmax_label, fci_forward, three_a_forward, Model, ModelKind};
use crate::neural::Mode;
use crate::textenc::{encode, CharVocab, DEFAULT_MAX_CHARS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    TextOnly,
    AudioAided,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCosts {
    pub text_ns: u64,
    pub audio_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutedPrediction {
    pub label: IntentLabel6,
    pub route: Route,
    pub fci_probs: Vec<f64>,
    #[serde(rename = "three_a_probs", skip_serializing_if = "Option::is_none")]
    pub three_a_probs: Option<Vec<f64>>,
    pub stage_costs: StageCosts,
    /// Set when the label came from a fallback policy instead of audio.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}

/// What to do when the sieve asks for audio that is not available.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FallbackPolicy {
    #[default]
    Error,
    SecondBest,
}

impl std::str::FromStr for FallbackPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "error" => Ok(Self::Error),
            "second-best" => Ok(Self::SecondBest),
            _ => Err(Error::InvalidConfig(format!("unknown fallback policy `{s}`"))),
        }
    }
}

/// Highest-probability class other than `IntoDepU`; ties go to the lower code.
pub fn second_best(fci_probs: &[f64]) -> IntentLabel6 {
    let clear = &fci_probs[..fci_probs.len().min(IntentLabel6::ALL.len())];
    IntentLabel6::ALL[argmax_label(clear)]
}

pub fn fallback_policy(fci_probs: &[f64], policy: FallbackPolicy) -> Result<IntentLabel6> {
    match policy {
        FallbackPolicy::Error => Err(Error::AudioRequired {
            fci_probs: fci_probs.to_vec(),
        }),
        FallbackPolicy::SecondBest => Ok(second_best(fci_probs)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CascadeConfig {
    pub features: FeatureConfig,
    pub max_chars: usize,
    pub fallback: FallbackPolicy,
    /// When set, utterances whose top-two sieve probabilities differ by
    /// less than this are also sent to the audio stage. Off by default.
    pub margin_threshold: Option<f64>,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            max_chars: DEFAULT_MAX_CHARS,
            fallback: FallbackPolicy::Error,
            margin_threshold: None,
        }
    }
}

/// Audio for one utterance, loaded only if the sieve routes it to the
/// audio stage.
#[derive(Debug, Clone, Copy)]
pub enum AudioSource<'w> {
    Missing,
    Waveform(&'w Waveform),
    Path(&'w std::path::Path),
}

impl<'w> From<Option<&'w Waveform>> for AudioSource<'w> {
    fn from(w: Option<&'w Waveform>) -> Self {
        w.map_or(AudioSource::Missing, AudioSource::Waveform)
    }
}

#[derive(Debug, Clone)]
pub struct RouteItem {
    pub text: String,
    pub audio: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub n_total: usize,
    pub n_text_only: usize,
    pub n_audio_aided: usize,
    pub text_ns: u64,
    pub audio_ns: u64,
}

impl CostReport {
    fn add(&mut self, r: &Result<RoutedPrediction>) {
        self.n_total += 1;
        if let Ok(p) = r {
            match p.route {
                Route::TextOnly => self.n_text_only += 1,
                Route::AudioAided => self.n_audio_aided += 1,
            }
            self.text_ns += p.stage_costs.text_ns;
            self.audio_ns += p.stage_costs.audio_ns;
        }
    }
}

pub struct Cascade<'m> {
    fci: &'m Model,
    three_a: &'m Model,
    vocab: &'m CharVocab,
    config: CascadeConfig,
    extractions: AtomicUsize,
}

impl<'m> Cascade<'m> {
    pub fn new(fci: &'m Model, three_a: &'m Model, vocab: &'m CharVocab, config: CascadeConfig) -> Result<Self> {
        if fci.kind() != ModelKind::Fci {
            return Err(Error::InvalidConfig(format!("sieve must be an fci model, got {}", fci.kind())));
        }
        if three_a.kind() != ModelKind::ThreeA {
            return Err(Error::InvalidConfig(format!(
                "disambiguator must be a three_a model, got {}",
                three_a.kind()
            )));
        }
        config.features.validate()?;
        if vocab.dim() != fci.config().text_dim || vocab.dim() != three_a.config().text_dim {
            return Err(Error::InvalidConfig(format!(
                "vocabulary dimension {} does not match the models",
                vocab.dim()
            )));
        }
        Ok(Self {
            fci,
            three_a,
            vocab,
            config,
            extractions: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &CascadeConfig {
        &self.config
    }

    /// Acoustic feature extractions performed so far.
    pub fn acoustic_extractions(&self) -> usize {
        self.extractions.load(Ordering::Relaxed)
    }

    pub fn reset_counter(&self) {
        self.extractions.store(0, Ordering::Relaxed);
    }

    fn wants_audio(&self, probs: &[f64]) -> bool {
        let top = argmax_label(probs);
        if top == IntentLabel7::IntoDepU.code() {
            return true;
        }
        self.config.margin_threshold.map_or(false, |m| {
            let second = probs
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != top)
                .map(|(_, &p)| p)
                .fold(f64::NEG_INFINITY, f64::max);
            probs[top] - second < m
        })
    }

    fn acoustic(&self, w: &Waveform) -> Result<crate::dsp::AcousticFeature> {
        self.extractions.fetch_add(1, Ordering::Relaxed);
        extract_feature(w, &self.config.features)
    }

    pub fn route<'w>(&self, text: &str, audio: impl Into<AudioSource<'w>>) -> Result<RoutedPrediction> {
        if text.trim().is_empty() {
            return Err(Error::invalid("empty transcript"));
        }
        let start = Instant::now();
        let feat = encode(text, self.vocab, self.config.max_chars)?;
        let fci_probs = fci_forward(&feat, self.fci, Mode::Infer, 0)?;
        let text_ns = start.elapsed().as_nanos() as u64;
        let top = argmax_label(&fci_probs);

        if !self.wants_audio(&fci_probs) {
            return Ok(RoutedPrediction {
                label: IntentLabel6::ALL[top],
                route: Route::TextOnly,
                fci_probs,
                three_a_probs: None,
                stage_costs: StageCosts { text_ns, audio_ns: 0 },
                fallback: false,
            });
        }

        let start = Instant::now();
        let loaded;
        let wave = match audio.into() {
            AudioSource::Waveform(w) => Some(w),
            AudioSource::Path(p) => {
                loaded = read_wav(p)?;
                Some(&loaded)
            }
            AudioSource::Missing => None,
        };
        let Some(wave) = wave else {
            if top != IntentLabel7::IntoDepU.code() {
                // a margin-triggered request degrades to the sieve's own answer
                return Ok(RoutedPrediction {
                    label: IntentLabel6::ALL[top],
                    route: Route::TextOnly,
                    fci_probs,
                    three_a_probs: None,
                    stage_costs: StageCosts { text_ns, audio_ns: 0 },
                    fallback: false,
                });
            }
            let label = fallback_policy(&fci_probs, self.config.fallback)?;
            return Ok(RoutedPrediction {
                label,
                route: Route::TextOnly,
                fci_probs,
                three_a_probs: None,
                stage_costs: StageCosts { text_ns, audio_ns: 0 },
                fallback: true,
            });
        };
        let acoustic = self.acoustic(wave)?;
        let probs = three_a_forward(&acoustic, &feat, self.three_a, Mode::Infer, 0)?;
        let audio_ns = start.elapsed().as_nanos() as u64;
        Ok(RoutedPrediction {
            label: IntentLabel6::ALL[argmax_label(&probs)],
            route: Route::AudioAided,
            fci_probs,
            three_a_probs: Some(probs),
            stage_costs: StageCosts { text_ns, audio_ns },
            fallback: false,
        })
    }

    /// Routes every item, collecting per-item errors; with `parallel` the
    /// items fan out over the rayon pool. Output order matches input order.
    pub fn route_batch(&self, items: &[RouteItem], parallel: bool) -> (Vec<Result<RoutedPrediction>>, CostReport) {
        let one = |it: &RouteItem| {
            let src = it.audio.as_deref().map_or(AudioSource::Missing, AudioSource::Path);
            self.route(&it.text, src)
        };
        let results: Vec<Result<RoutedPrediction>> = if parallel {
            items.par_iter().map(one).collect()
        } else {
            items.iter().map(one).collect()
        };
        let mut report = CostReport::default();
        results.iter().for_each(|r| report.add(r));
        (results, report)
    }

    /// The comparison path: acoustic features and the audio-text model for
    /// every utterance, no sieve.
    pub fn always_multimodal(&self, text: &str, audio: &Waveform) -> Result<IntentLabel6> {
        let feat = encode(text, self.vocab, self.config.max_chars)?;
        let acoustic = self.acoustic(audio)?;
        let probs = three_a_forward(&acoustic, &feat, self.three_a, Mode::Infer, 0)?;
        Ok(IntentLabel6::ALL[argmax_label(&probs)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelConfig;
    use crate::synth::{synthetic_corpus, synthetic_vocab, SynthConfig};

    fn small(kind: ModelKind, dim: usize) -> ModelConfig {
        ModelConfig {
            text_len: 12,
            text_dim: dim,
            audio_frames: 40,
            zero_init_head: true,
            ..ModelConfig::for_kind(kind)
        }
    }

    /// Zero-initialized heads give uniform logits; nudging one output bias
    /// fixes the sieve's argmax.
    fn fci_forcing(label: IntentLabel7, dim: usize) -> Model {
        let mut m = Model::new(ModelKind::Fci, small(ModelKind::Fci, dim)).unwrap();
        let id = m.params().id_of("mlp.output.bias").expect("output bias");
        m.params_mut().get_mut(id).tensor.data_mut()[label.code()] = 5.0;
        m
    }

    fn setup(label: IntentLabel7) -> (Model, Model, CharVocab, CascadeConfig) {
        let vocab = synthetic_vocab(8, 0);
        let fci = fci_forcing(label, 8);
        let three_a = Model::new(ModelKind::ThreeA, small(ModelKind::ThreeA, 8)).unwrap();
        let cfg = CascadeConfig {
            features: FeatureConfig {
                tail_frames: 40,
                ..FeatureConfig::default()
            },
            max_chars: 12,
            ..CascadeConfig::default()
        };
        (fci, three_a, vocab, cfg)
    }

    #[test]
    fn clear_label_bypasses_audio() {
        let (fci, three_a, vocab, cfg) = setup(IntentLabel7::Question);
        let c = Cascade::new(&fci, &three_a, &vocab, cfg).unwrap();
        let u = &synthetic_corpus(1, 0.0, 1, &SynthConfig::default()).unwrap()[0];
        let p = c.route(&u.text, Some(&u.waveform)).unwrap();
        assert_eq!(p.label, IntentLabel6::Question);
        assert_eq!(p.route, Route::TextOnly);
        assert_eq!(p.stage_costs.audio_ns, 0);
        assert!(p.three_a_probs.is_none());
        assert_eq!(c.acoustic_extractions(), 0);
    }

    #[test]
    fn intonation_dependent_uses_audio() {
        let (fci, three_a, vocab, cfg) = setup(IntentLabel7::IntoDepU);
        let c = Cascade::new(&fci, &three_a, &vocab, cfg).unwrap();
        let u = &synthetic_corpus(1, 1.0, 1, &SynthConfig::default()).unwrap()[0];
        let p = c.route(&u.text, Some(&u.waveform)).unwrap();
        assert_eq!(p.route, Route::AudioAided);
        let probs = p.three_a_probs.as_ref().unwrap();
        assert_eq!(p.label.code(), argmax_label(probs));
        assert_eq!(c.acoustic_extractions(), 1);

        let err = c.route(&u.text, None).unwrap_err();
        match err {
            Error::AudioRequired { fci_probs } => assert_eq!(fci_probs, p.fci_probs),
            e => panic!("unexpected {e:?}"),
        }
        assert_eq!(c.acoustic_extractions(), 1);
    }

    #[test]
    fn second_best_fallback() {
        let (fci, three_a, vocab, mut cfg) = setup(IntentLabel7::IntoDepU);
        cfg.fallback = FallbackPolicy::SecondBest;
        let c = Cascade::new(&fci, &three_a, &vocab, cfg).unwrap();
        let p = c.route("가나다", None).unwrap();
        assert!(p.fallback);
        // all clear classes tie, so the lowest code wins
        assert_eq!(p.label, IntentLabel6::Fragment);
    }

    #[test]
    fn fallback_policy_examples() {
        let probs = [0.02, 0.03, 0.3, 0.02, 0.02, 0.01, 0.6];
        assert_eq!(fallback_policy(&probs, FallbackPolicy::SecondBest).unwrap(), IntentLabel6::Question);
        assert!(matches!(fallback_policy(&probs, FallbackPolicy::Error), Err(Error::AudioRequired { .. })));
        let tie = [0.1, 0.2, 0.2, 0.0, 0.0, 0.0, 0.5];
        assert_eq!(second_best(&tie), IntentLabel6::Statement);
        assert_eq!("second_best".parse::<FallbackPolicy>().unwrap(), FallbackPolicy::SecondBest);
    }

    #[test]
    fn margin_hook_sends_close_calls_to_audio() {
        let (fci, three_a, vocab, mut cfg) = setup(IntentLabel7::Question);
        cfg.margin_threshold = Some(1.1);
        let c = Cascade::new(&fci, &three_a, &vocab, cfg).unwrap();
        let u = &synthetic_corpus(1, 0.0, 1, &SynthConfig::default()).unwrap()[0];
        assert_eq!(c.route(&u.text, Some(&u.waveform)).unwrap().route, Route::AudioAided);
        assert_eq!(c.route(&u.text, None).unwrap().route, Route::TextOnly);
    }

    #[test]
    fn batch_reports_costs_in_order() {
        let (fci, three_a, vocab, cfg) = setup(IntentLabel7::IntoDepU);
        let c = Cascade::new(&fci, &three_a, &vocab, cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let corpus = synthetic_corpus(3, 1.0, 4, &SynthConfig::default()).unwrap();
        let mut items = Vec::new();
        for (i, u) in corpus.iter().enumerate() {
            let path = dir.path().join(format!("{i}.wav"));
            crate::dsp::write_wav(&path, &u.waveform).unwrap();
            items.push(RouteItem {
                text: u.text.clone(),
                audio: (i != 1).then_some(path),
            });
        }
        let (seq, rep) = c.route_batch(&items, false);
        let (par, rep_par) = c.route_batch(&items, true);
        assert!(seq[1].is_err());
        assert_eq!(rep.n_total, 3);
        assert_eq!(rep.n_audio_aided, 2);
        assert_eq!(rep.n_text_only, 0);
        assert_eq!(rep_par.n_audio_aided, 2);
        for (a, b) in seq.iter().zip(&par) {
            if let (Ok(a), Ok(b)) = (a, b) {
                assert_eq!(a.label, b.label);
                assert_eq!(a.three_a_probs, b.three_a_probs);
            }
        }
        let json = serde_json::to_value(rep).unwrap();
        for key in ["n_total", "n_text_only", "n_audio_aided", "text_ns", "audio_ns"] {
            assert!(json.get(key).is_some());
        }
    }

    #[test]
    fn rejects_swapped_models() {
        let (fci, three_a, vocab, cfg) = setup(IntentLabel7::Question);
        assert!(Cascade::new(&three_a, &fci, &vocab, cfg).is_err());
    }
}
