//! Seeded synthetic corpora for tests, demos, and benchmarks.
//!
//! Each class ends in its own sentence-final syllable, except that all
//! intonation-dependent utterances share one ending; their disambiguated
//! label is carried only by the prosody (pitch register and the contour of
//! the final syllable).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::Waveform;
use crate::error::Result;
use crate::labels::{IntentLabel6, IntentLabel7};
use crate::textenc::CharVocab;

const BODY: &[char] = &[
    '가', '나', '는', '도', '를', '마', '바', '사', '서', '아', '에', '오', '우', '이', '자', '제', '주',
    '하', '한', '학', '교', '집', '밥', '물', '책', '길', '날', '시', '간', '친', '구', '오', '늘', '내',
    '일', '어', '제', '먹', '보', '빨',
];

/// Sentence-final syllable per seven-way class.
const ENDERS: [char; 7] = ['것', '다', '까', '라', '냐', '지', '요'];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub sample_rate_hz: u32,
    pub amplitude: f64,
    pub syllable_secs: f64,
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 16_000,
            amplitude: 0.01,
            syllable_secs: 0.12,
            noise: 0.0005,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthUtterance {
    pub text: String,
    pub label7: IntentLabel7,
    pub label6: IntentLabel6,
    pub waveform: Waveform,
}

/// Character vectors for every synthetic syllable, uniform in `[-0.5, 0.5]`.
pub fn synthetic_vocab(dim: usize, seed: u64) -> CharVocab {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vocab = CharVocab::new(dim);
    let mut chars: Vec<char> = BODY.iter().chain(&ENDERS).copied().collect();
    chars.sort_unstable();
    chars.dedup();
    for c in chars {
        let v = (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
        vocab.insert(c, v).expect("dimension matches");
    }
    vocab
}

fn transcript(label7: IntentLabel7, rng: &mut ChaCha8Rng) -> String {
    let words = rng.gen_range(2..=5);
    let mut out = Vec::with_capacity(words);
    for _ in 0..words {
        let len = rng.gen_range(1..=3);
        out.push((0..len).map(|_| *BODY.choose(rng).unwrap()).collect::<String>());
    }
    out.last_mut().unwrap().push(ENDERS[label7.code()]);
    out.join(" ")
}

/// Glottal-ish harmonic tone with one envelope bump per syllable, a
/// class-dependent pitch register, and a class-dependent pitch movement over
/// the final syllable.
pub fn synthesize_audio(text: &str, label6: IntentLabel6, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Waveform> {
    let syllables = text.chars().filter(|c| !c.is_whitespace()).count().max(1);
    let sr = cfg.sample_rate_hz as f64;
    let syl_len = (cfg.syllable_secs * sr) as usize;
    let n = syl_len * syllables + (0.1 * sr) as usize;
    let f0 = 110.0 + 25.0 * label6.code() as f64 + rng.gen_range(0.0..10.0);
    let final_start = syl_len * (syllables - 1);
    let (tail_ratio, tail_gain) = match label6 {
        IntentLabel6::Fragment => (1.0, 0.5),
        IntentLabel6::Statement => (0.6, 0.8),
        IntentLabel6::Question => (1.7, 1.0),
        IntentLabel6::Command => (1.0, 1.6),
        IntentLabel6::RhetoricalQ => (1.3, 1.3),
        IntentLabel6::RhetoricalC => (0.8, 1.4),
    };
    let mut phase = 0.0f64;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let (pitch, gain) = if i >= final_start {
            let t = ((i - final_start) as f64 / syl_len as f64).min(1.0);
            (f0 * (1.0 + (tail_ratio - 1.0) * t), tail_gain)
        } else {
            (f0 * (1.0 + 0.05 * ((i / syl_len.max(1)) % 2) as f64), 1.0)
        };
        phase += 2.0 * std::f64::consts::PI * pitch / sr;
        let within = (i % syl_len.max(1)) as f64 / syl_len.max(1) as f64;
        let env = if i < syl_len * syllables {
            (std::f64::consts::PI * within).sin().powi(2)
        } else {
            0.0
        };
        let tone: f64 = (1..=5).map(|h| (h as f64 * phase).sin() / h as f64).sum();
        samples.push(cfg.amplitude * gain * env * tone + cfg.noise * rng.gen_range(-1.0..1.0));
    }
    Waveform::new(samples, cfg.sample_rate_hz)
}

/// `n` utterances: `round(n * iu_fraction)` intonation-dependent ones, the
/// rest cycling through the six clear classes, in shuffled order.
pub fn synthetic_corpus(n: usize, iu_fraction: f64, seed: u64, cfg: &SynthConfig) -> Result<Vec<SynthUtterance>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_iu = ((n as f64) * iu_fraction.clamp(0.0, 1.0)).round() as usize;
    let mut labels: Vec<IntentLabel7> = (0..n_iu).map(|_| IntentLabel7::IntoDepU).collect();
    labels.extend((0..n - n_iu).map(|i| IntentLabel7::ALL[i % 6]));
    labels.shuffle(&mut rng);
    let ambiguous = [IntentLabel6::Statement, IntentLabel6::Question, IntentLabel6::Command];
    let mut iu_seen = 0;
    labels
        .into_iter()
        .map(|label7| {
            let label6 = match label7.to_six() {
                Some(l) => l,
                None => {
                    iu_seen += 1;
                    ambiguous[(iu_seen - 1) % ambiguous.len()]
                }
            };
            let text = transcript(label7, &mut rng);
            let waveform = synthesize_audio(&text, label6, cfg, &mut rng)?;
            Ok(SynthUtterance {
                text,
                label7,
                label6,
                waveform,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_seeded_and_labelled() {
        let cfg = SynthConfig::default();
        let a = synthetic_corpus(40, 0.25, 7, &cfg).unwrap();
        let b = synthetic_corpus(40, 0.25, 7, &cfg).unwrap();
        assert_eq!(a.len(), 40);
        assert_eq!(a.iter().filter(|u| u.label7 == IntentLabel7::IntoDepU).count(), 10);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.text, y.text);
            assert_eq!(x.waveform.samples(), y.waveform.samples());
        }
        for u in &a {
            assert_eq!(u.text.chars().last(), Some(ENDERS[u.label7.code()]));
            if let Some(six) = u.label7.to_six() {
                assert_eq!(six, u.label6);
            }
        }
    }

    #[test]
    fn vocab_covers_every_transcript() {
        let vocab = synthetic_vocab(16, 1);
        let corpus = synthetic_corpus(30, 0.3, 2, &SynthConfig::default()).unwrap();
        assert!(corpus.iter().flat_map(|u| u.text.chars()).all(|c| vocab.contains(c)));
    }
}
