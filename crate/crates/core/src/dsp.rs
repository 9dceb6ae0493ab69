//! Acoustic front end: magnitude STFT, mel projection, RMS energy contour,
//! and the tail-windowed `(frames, n_mels + 1)` feature matrix.
//!
//! Framing is centered: the signal is reflection-padded by `n_fft / 2` on
//! both sides, so a signal of `L` samples yields `1 + L / hop` frames. A
//! periodic Hann window is applied before the DFT. Mel breakpoints use the
//! HTK formula `2595 * log10(1 + f / 700)`.

use std::io::{BufRead, Write};
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Mono signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("waveform is empty"));
        }
        if sample_rate_hz == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("waveform contains non-finite samples"));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub tail_frames: usize,
    /// Converts mel magnitudes to decibels; the energy column stays linear.
    pub apply_log: bool,
    pub sample_rate_hz: u32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            n_fft: 2048,
            hop: 512,
            n_mels: 128,
            tail_frames: 300,
            apply_log: false,
            sample_rate_hz: 16_000,
        }
    }
}

impl FeatureConfig {
    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Width of the feature matrix: mel bins plus the energy column.
    pub fn feature_dim(&self) -> usize {
        self.n_mels + 1
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_fft", self.n_fft),
            ("hop", self.hop),
            ("n_mels", self.n_mels),
            ("tail_frames", self.tail_frames),
            ("sample_rate_hz", self.sample_rate_hz as usize),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.hop > self.n_fft {
            return Err(Error::InvalidConfig(format!(
                "hop ({}) exceeds n_fft ({})",
                self.hop, self.n_fft
            )));
        }
        if self.n_mels > self.n_bins() {
            return Err(Error::InvalidConfig(format!(
                "n_mels ({}) exceeds n_fft/2 + 1 ({})",
                self.n_mels,
                self.n_bins()
            )));
        }
        Ok(())
    }
}

/// Tail-windowed acoustic feature. Real frames occupy the bottom
/// `valid_frames` rows; rows above them are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticFeature {
    pub matrix: Matrix,
    pub valid_frames: usize,
}

pub fn frame_count(n_samples: usize, hop: usize) -> usize {
    1 + n_samples / hop
}

/// Maps an index of the padded signal back into `[0, len)` by mirror
/// reflection about the end samples (the edge sample is not repeated).
fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

/// Centered frames of the reflection-padded signal, each `n_fft` long.
fn centered_frames(w: &Waveform, n_fft: usize, hop: usize) -> Vec<Vec<f64>> {
    let x = w.samples();
    let pad = (n_fft / 2) as isize;
    (0..frame_count(x.len(), hop))
        .map(|t| {
            let start = (t * hop) as isize - pad;
            (0..n_fft as isize)
                .map(|k| x[reflect_index(start + k, x.len())])
                .collect()
        })
        .collect()
}

pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Magnitude spectrogram of shape `(frames, n_fft / 2 + 1)`.
pub fn stft_magnitude(w: &Waveform, cfg: &FeatureConfig) -> Result<Matrix> {
    cfg.validate()?;
    if w.is_empty() {
        return Err(Error::invalid("waveform is empty"));
    }
    let window = hann_window(cfg.n_fft);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.n_fft);
    let frames = centered_frames(w, cfg.n_fft, cfg.hop);
    let n_bins = cfg.n_bins();
    let mut out = Matrix::zeros(frames.len(), n_bins);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    for (t, frame) in frames.iter().enumerate() {
        for ((b, &s), &win) in buf.iter_mut().zip(frame).zip(&window) {
            *b = Complex::new(s * win, 0.0);
        }
        fft.process(&mut buf);
        for (o, b) in out.row_mut(t).iter_mut().zip(&buf[..n_bins]) {
            *o = b.norm();
        }
    }
    Ok(out)
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filters of shape `(n_mels, n_fft / 2 + 1)` spanning
/// 0 Hz to Nyquist. Filters are unnormalized (peak weight 1). A filter too
/// narrow to touch any bin gets weight 1 on the bin nearest its center.
pub fn mel_filterbank(cfg: &FeatureConfig) -> Result<Matrix> {
    cfg.validate()?;
    let n_bins = cfg.n_bins();
    let sr = cfg.sample_rate_hz as f64;
    let mel_max = hz_to_mel(sr / 2.0);
    let mut edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    // pin the outer edges; the mel round trip is not exact
    edges[0] = 0.0;
    edges[cfg.n_mels + 1] = sr / 2.0;
    let bin_hz = |k: usize| k as f64 * sr / cfg.n_fft as f64;

    let mut fb = Matrix::zeros(cfg.n_mels, n_bins);
    for m in 0..cfg.n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let mut any = false;
        for k in 0..n_bins {
            let f = bin_hz(k);
            let rise = (f - lo) / (center - lo);
            let fall = (hi - f) / (hi - center);
            let w = rise.min(fall).max(0.0);
            if w > 0.0 {
                any = true;
            }
            fb.set(m, k, w);
        }
        if !any {
            let nearest = ((center * cfg.n_fft as f64 / sr).round() as usize).min(n_bins - 1);
            fb.set(m, nearest, 1.0);
        }
    }
    Ok(fb)
}

/// Per-frame RMS over the same centered (unwindowed) frames as the STFT.
pub fn energy_contour(w: &Waveform, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if w.is_empty() {
        return Err(Error::invalid("waveform is empty"));
    }
    Ok(centered_frames(w, cfg.n_fft, cfg.hop)
        .iter()
        .map(|f| (f.iter().map(|x| x * x).sum::<f64>() / f.len() as f64).sqrt())
        .collect())
}

const DB_FLOOR: f64 = 1e-5;

/// Mel spectrogram plus energy column, tail-windowed to `cfg.tail_frames`
/// rows with zero rows on top for short utterances.
pub fn extract_feature(w: &Waveform, cfg: &FeatureConfig) -> Result<AcousticFeature> {
    let mag = stft_magnitude(w, cfg)?;
    let fb = mel_filterbank(cfg)?;
    let energy = energy_contour(w, cfg)?;
    let frames = mag.rows();
    debug_assert_eq!(frames, energy.len());

    let valid = frames.min(cfg.tail_frames);
    let first_frame = frames - valid;
    let pad_rows = cfg.tail_frames - valid;
    let mut out = Matrix::zeros(cfg.tail_frames, cfg.feature_dim());
    for i in 0..valid {
        let t = first_frame + i;
        let spec = mag.row(t);
        let row = out.row_mut(pad_rows + i);
        for m in 0..cfg.n_mels {
            let v: f64 = fb.row(m).iter().zip(spec).map(|(a, b)| a * b).sum();
            row[m] = if cfg.apply_log {
                20.0 * v.max(DB_FLOOR).log10()
            } else {
                v
            };
        }
        row[cfg.n_mels] = energy[t];
    }
    Ok(AcousticFeature {
        matrix: out,
        valid_frames: valid,
    })
}

/// Reads a 16-bit PCM mono WAV file. Samples are scaled to `[-1, 1)`.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::invalid(format!(
            "{}: expected mono audio, found {} channels",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::invalid(format!(
            "{}: expected 16-bit PCM, found {:?} {}-bit",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Waveform::new(samples, spec.sample_rate)
}

/// Writes a 16-bit PCM mono WAV, clipping samples to `[-1, 1]`.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate_hz(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in w.samples() {
        writer.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)?;
    }
    writer.finalize()?;
    Ok(())
}

const DUMP_MAGIC: &str = "ISF1";

/// Writes `ISF1 <rows> <cols>\n` followed by row-major little-endian `f32`s.
pub fn write_feature_dump<W: Write>(mut out: W, m: &Matrix) -> Result<()> {
    writeln!(out, "{DUMP_MAGIC} {} {}", m.rows(), m.cols())?;
    let mut bytes = Vec::with_capacity(m.as_slice().len() * 4);
    for &v in m.as_slice() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.write_all(&bytes)?;
    Ok(())
}

pub fn read_feature_dump<R: BufRead>(mut input: R) -> Result<Matrix> {
    let mut header = String::new();
    input.read_line(&mut header)?;
    let bad = |msg: &str| Error::Parse {
        line: 1,
        msg: msg.to_string(),
    };
    let mut parts = header.split_whitespace();
    if parts.next() != Some(DUMP_MAGIC) {
        return Err(bad("missing ISF1 magic"));
    }
    let rows: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("bad row count"))?;
    let cols: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("bad column count"))?;
    let mut bytes = vec![0u8; rows * cols * 4];
    input.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(Matrix::from_vec(rows, cols, data))
}
