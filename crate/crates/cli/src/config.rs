use std::path::Path;

use intent_sieve::cascade::FallbackPolicy;
use intent_sieve::corpus::SplitSpec;
use intent_sieve::dsp::FeatureConfig;
use intent_sieve::textenc::DEFAULT_MAX_CHARS;
use intent_sieve::models::{ModelConfig, ModelKind};
use intent_sieve::train::TrainConfig;
use intent_sieve::{Error, Result};
use serde::Deserialize;
use serde_json::Value;

/// Optional JSON configuration; every field may be omitted.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub train_ratio: Option<f64>,
    pub stratified: Option<bool>,
    pub fallback: Option<FallbackPolicy>,
    pub max_chars: Option<usize>,
    pub features: Option<Value>,
    pub model: Option<Value>,
}

/// Effective settings after layering defaults, the config file, and flags.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub features: FeatureConfig,
    pub model_overrides: serde_json::Map<String, Value>,
    pub train: TrainConfig,
    pub split: SplitSpec,
    pub fallback: FallbackPolicy,
    pub max_chars: usize,
}

trait Context<T> {
    fn context(self, what: &str) -> Result<T>;
}

impl<T> Context<T> for std::result::Result<T, serde_json::Error> {
    fn context(self, what: &str) -> Result<T> {
        self.map_err(|e| Error::InvalidConfig(format!("{what}: {e}")))
    }
}

pub fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).context(&format!("config {}", p.display()))
        }
    }
}

impl Settings {
    /// Defaults overlaid with the config file. Flags are applied by callers.
    pub fn resolve(file: FileConfig, seed_flag: Option<u64>) -> Result<Self> {
        let seed = seed_flag.or(file.seed).unwrap_or(42);
        let features = match file.features {
            Some(v) => serde_json::from_value(v).context("features")?,
            None => FeatureConfig::default(),
        };
        let model_overrides = match file.model {
            Some(Value::Object(m)) => m,
            Some(_) => return Err(Error::InvalidConfig("`model` must be an object".into())),
            None => Default::default(),
        };
        let mut train = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        if let Some(e) = file.epochs {
            train.epochs = e;
        }
        if let Some(b) = file.batch_size {
            train.batch_size = b;
        }
        if let Some(lr) = file.learning_rate {
            train.adam.lr = lr;
        }
        let mut split = SplitSpec {
            seed,
            ..SplitSpec::default()
        };
        if let Some(r) = file.train_ratio {
            split.train_ratio = r;
        }
        if let Some(s) = file.stratified {
            split.stratified = s;
        }
        Ok(Self {
            seed,
            features,
            model_overrides,
            train,
            split,
            fallback: file.fallback.unwrap_or_default(),
            max_chars: file.max_chars.unwrap_or(DEFAULT_MAX_CHARS),
        })
    }

    /// Model configuration for `kind`, sized to the feature settings and the
    /// vocabulary, with config-file overrides applied on top.
    pub fn model_config(&self, kind: ModelKind, text_dim: usize) -> Result<ModelConfig> {
        let mut base = ModelConfig {
            seed: self.seed,
            text_dim,
            text_len: self.max_chars,
            audio_frames: self.features.tail_frames,
            audio_bins: self.features.feature_dim(),
            ..ModelConfig::for_kind(kind)
        };
        if !self.model_overrides.is_empty() {
            let mut v = serde_json::to_value(&base)?;
            let obj = v.as_object_mut().expect("config serializes to an object");
            for (k, val) in &self.model_overrides {
                if !obj.contains_key(k) {
                    return Err(Error::InvalidConfig(format!("unknown model setting `{k}`")));
                }
                obj.insert(k.clone(), val.clone());
            }
            base = serde_json::from_value(v).context("model")?;
        }
        Ok(base)
    }
}
