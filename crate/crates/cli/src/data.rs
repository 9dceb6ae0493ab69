use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use intent_sieve::corpus::{load_manifest, Labeled, SpeechExample};
use intent_sieve::dsp::{extract_feature, read_wav, AcousticFeature, FeatureConfig, Waveform};
use intent_sieve::textenc::{encode, CharSequenceFeature, CharVocab};
use intent_sieve::{Error, Result};
use serde::Serialize;

pub fn require_exists(p: &Path) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{} does not exist", p.display())))
    }
}

/// Prefixes an error with the file it came from.
pub fn at(path: &Path, e: Error) -> Error {
    Error::InvalidInput(format!("{}: {e}", path.display()))
}

/// Manifest rows plus the directory their relative audio paths hang off.
pub struct Manifest {
    pub rows: Vec<SpeechExample>,
    pub base: PathBuf,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        require_exists(path)?;
        let rows = load_manifest(path).map_err(|e| at(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { rows, base })
    }

    /// `None` when the row leaves the audio field empty.
    pub fn audio_path(&self, i: usize) -> Option<PathBuf> {
        let r = &self.rows[i];
        (!r.audio_path.trim().is_empty()).then(|| r.audio_path_in(&self.base))
    }

    pub fn waveform(&self, i: usize) -> Result<Waveform> {
        let p = self
            .audio_path(i)
            .ok_or_else(|| Error::InvalidInput(format!("manifest row {} has no audio", i + 1)))?;
        read_wav(&p).map_err(|e| at(&p, e))
    }

    pub fn features(&self, i: usize, cfg: &FeatureConfig) -> Result<AcousticFeature> {
        extract_feature(&self.waveform(i)?, cfg)
    }
}

pub fn encode_text(text: &str, vocab: &CharVocab, max_chars: usize) -> Result<CharSequenceFeature> {
    encode(text, vocab, max_chars)
}

/// Index into some backing list, labelled for splitting.
#[derive(Debug, Clone, Copy)]
pub struct Tagged {
    pub index: usize,
    pub class: usize,
}

impl Labeled for Tagged {
    fn class(&self) -> usize {
        self.class
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: &Path, values: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in values {
        serde_json::to_writer(&mut w, v)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}
