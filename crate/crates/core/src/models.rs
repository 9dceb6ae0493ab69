//! The model family: the seven-way text sieve, the six-way audio-text
//! network, and the text/audio baselines.
//!
//! Every model is `encoders -> concat -> dense(mlp_hidden) -> relu ->
//! dropout -> dense(K)`. Text encoders read `(B, L, D)` character matrices;
//! the audio encoder reads `(B, F, N + 1)` mel+energy matrices.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::AcousticFeature;
use crate::error::{Error, Result};
use crate::neural::checkpoint::{read_checkpoint, write_checkpoint};
use crate::neural::layers::{BiLstm, BiLstmAttention, ConvBlock, ConvSpec, Dense};
use crate::neural::{conv_output_hw, softmax_in_place, Graph, Mode, Padding, ParamStore, Tensor, Var};
use crate::textenc::CharSequenceFeature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSpace {
    Seven,
    Six,
}

impl LabelSpace {
    pub fn size(self) -> usize {
        match self {
            LabelSpace::Seven => 7,
            LabelSpace::Six => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    CharCnn,
    CharBiLstm,
    CharCnnBiLstm,
    CharBiLstmAtt,
    CharCnnBiLstmAtt,
    OnlySpeech,
    OnlyText6,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 7] = [
        BaselineKind::CharCnn,
        BaselineKind::CharBiLstm,
        BaselineKind::CharCnnBiLstm,
        BaselineKind::CharBiLstmAtt,
        BaselineKind::CharCnnBiLstmAtt,
        BaselineKind::OnlySpeech,
        BaselineKind::OnlyText6,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Fci,
    ThreeA,
    Baseline(BaselineKind),
}

impl ModelKind {
    pub fn label_space(self) -> LabelSpace {
        match self {
            ModelKind::Fci => LabelSpace::Seven,
            ModelKind::ThreeA => LabelSpace::Six,
            ModelKind::Baseline(BaselineKind::OnlySpeech | BaselineKind::OnlyText6) => LabelSpace::Six,
            ModelKind::Baseline(_) => LabelSpace::Seven,
        }
    }

    pub fn uses_text(self) -> bool {
        !matches!(self, ModelKind::Baseline(BaselineKind::OnlySpeech))
    }

    pub fn uses_audio(self) -> bool {
        matches!(self, ModelKind::ThreeA | ModelKind::Baseline(BaselineKind::OnlySpeech))
    }

    fn text_parts(self) -> &'static [TextPartKind] {
        use TextPartKind::*;
        match self {
            ModelKind::Fci | ModelKind::ThreeA => &[BiLstmAtt],
            ModelKind::Baseline(b) => match b {
                BaselineKind::CharCnn => &[Cnn],
                BaselineKind::CharBiLstm => &[BiLstm],
                BaselineKind::CharCnnBiLstm => &[Cnn, BiLstm],
                BaselineKind::CharBiLstmAtt | BaselineKind::OnlyText6 => &[BiLstmAtt],
                BaselineKind::CharCnnBiLstmAtt => &[Cnn, BiLstmAtt],
                BaselineKind::OnlySpeech => &[],
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Fci => "fci",
            ModelKind::ThreeA => "three_a",
            ModelKind::Baseline(b) => match b {
                BaselineKind::CharCnn => "char_cnn",
                BaselineKind::CharBiLstm => "char_bilstm",
                BaselineKind::CharCnnBiLstm => "char_cnn_bilstm",
                BaselineKind::CharBiLstmAtt => "char_bilstm_att",
                BaselineKind::CharCnnBiLstmAtt => "char_cnn_bilstm_att",
                BaselineKind::OnlySpeech => "only_speech",
                BaselineKind::OnlyText6 => "only_text6",
            },
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let squash = |s: &str| s.to_ascii_lowercase().replace(['-', '+', '_', ' '], "");
        let norm = squash(s.trim());
        let kinds = [ModelKind::Fci, ModelKind::ThreeA]
            .into_iter()
            .chain(BaselineKind::ALL.into_iter().map(ModelKind::Baseline));
        for k in kinds {
            if squash(k.name()) == norm {
                return Ok(k);
            }
        }
        match norm.as_str() {
            "3a" | "multimodal" => Ok(ModelKind::ThreeA),
            "onlytext" => Ok(ModelKind::Baseline(BaselineKind::OnlyText6)),
            _ => Err(Error::InvalidConfig(format!("unknown model kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TextPartKind {
    Cnn,
    BiLstm,
    BiLstmAtt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// 64 or 128.
    pub mlp_hidden: usize,
    pub dropout: f64,
    pub label_space: LabelSpace,
    pub fusion_proj_dim: usize,
    pub lstm_hidden: usize,
    pub context_dim: usize,
    pub text_len: usize,
    pub text_dim: usize,
    pub audio_frames: usize,
    pub audio_bins: usize,
    /// Output layer starts at zero, so an untrained model is uniform.
    pub zero_init_head: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            mlp_hidden: 128,
            dropout: 0.3,
            label_space: LabelSpace::Seven,
            fusion_proj_dim: 128,
            lstm_hidden: 64,
            context_dim: 64,
            text_len: 50,
            text_dim: 100,
            audio_frames: 300,
            audio_bins: 129,
            zero_init_head: false,
            seed: 42,
        }
    }
}

impl ModelConfig {
    pub fn for_kind(kind: ModelKind) -> Self {
        Self {
            label_space: kind.label_space(),
            ..Self::default()
        }
    }

    fn validate(&self, kind: ModelKind) -> Result<()> {
        if !matches!(self.mlp_hidden, 64 | 128) {
            return Err(Error::InvalidConfig(format!(
                "mlp_hidden must be 64 or 128, got {}",
                self.mlp_hidden
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.label_space != kind.label_space() {
            return Err(Error::InvalidConfig(format!(
                "{kind} predicts {} classes, config asks for {}",
                kind.label_space().size(),
                self.label_space.size()
            )));
        }
        for (name, v) in [
            ("fusion_proj_dim", self.fusion_proj_dim),
            ("lstm_hidden", self.lstm_hidden),
            ("context_dim", self.context_dim),
            ("text_len", self.text_len),
            ("text_dim", self.text_dim),
            ("audio_frames", self.audio_frames),
            ("audio_bins", self.audio_bins),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// The audio CNN: five conv blocks with the pooling schedule
/// `2x2, 2x2, 2x2, 2x1, 2x1`.
pub const AUDIO_CNN: [ConvSpec; 5] = [
    ConvSpec { kernel: (5, 5), filters: 32, pool: Some((2, 2)) },
    ConvSpec { kernel: (5, 5), filters: 64, pool: Some((2, 2)) },
    ConvSpec { kernel: (3, 3), filters: 128, pool: Some((2, 2)) },
    ConvSpec { kernel: (3, 3), filters: 32, pool: Some((2, 1)) },
    ConvSpec { kernel: (3, 3), filters: 32, pool: Some((2, 1)) },
];

/// The text CNN: a kernel spanning the full vector width, then a `3x1` conv.
fn text_cnn_specs(dim: usize) -> [ConvSpec; 2] {
    [
        ConvSpec { kernel: (3, dim), filters: 32, pool: Some((2, 1)) },
        ConvSpec { kernel: (3, 1), filters: 32, pool: None },
    ]
}

/// Shapes `(H, W, C)` after each block of a conv stack.
pub fn conv_stack_shapes(
    input: (usize, usize, usize),
    specs: &[ConvSpec],
    padding: Padding,
) -> Result<Vec<(usize, usize, usize)>> {
    let mut out = Vec::with_capacity(specs.len());
    let (mut h, mut w, _) = input;
    for s in specs {
        let (ho, wo) = conv_output_hw(h, w, s.kernel.0, s.kernel.1, padding)
            .ok_or_else(|| Error::shape(format!("kernel {:?} does not fit ({h}, {w})", s.kernel)))?;
        (h, w) = (ho, wo);
        if let Some((ph, pw)) = s.pool {
            if ph > h || pw > w {
                return Err(Error::shape(format!("pool ({ph}, {pw}) does not fit ({h}, {w})")));
            }
            (h, w) = (h / ph, w / pw);
        }
        out.push((h, w, s.filters));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct ConvStack {
    blocks: Vec<ConvBlock>,
    out_shape: (usize, usize, usize),
}

impl ConvStack {
    #[allow(clippy::too_many_arguments)]
    fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        input: (usize, usize),
        specs: &[ConvSpec],
        padding: Padding,
        batchnorm: bool,
        dropout: f64,
    ) -> Result<Self> {
        let shapes = conv_stack_shapes((input.0, input.1, 1), specs, padding)?;
        let mut blocks = Vec::with_capacity(specs.len());
        let mut channels = 1;
        for (i, s) in specs.iter().enumerate() {
            blocks.push(ConvBlock::new(
                store,
                rng,
                &format!("{name}.conv{i}"),
                channels,
                *s,
                padding,
                batchnorm,
                dropout,
            )?);
            channels = s.filters;
        }
        Ok(Self {
            blocks,
            out_shape: *shapes.last().expect("non-empty conv stack"),
        })
    }

    fn flat_dim(&self) -> usize {
        self.out_shape.0 * self.out_shape.1 * self.out_shape.2
    }

    /// `(B, H, W)` -> `(B, flat)`.
    fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let s = g.shape(x).to_vec();
        let mut h = g.reshape(x, vec![s[0], s[1], s[2], 1])?;
        for b in &self.blocks {
            h = b.forward(g, h)?;
        }
        g.reshape(h, vec![s[0], self.flat_dim()])
    }
}

#[derive(Debug, Clone)]
enum TextPart {
    Cnn(ConvStack),
    BiLstm(BiLstm),
    BiLstmAtt(BiLstmAttention),
}

#[derive(Debug, Clone)]
struct AudioEncoder {
    cnn: ConvStack,
    cnn_proj: Dense,
    rnn: BiLstmAttention,
    fuse: Dense,
}

/// Attention weights produced during a forward pass, one `(B, T)` var per
/// attention-pooled encoder.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Var,
    pub attention: Vec<Var>,
}

/// A batch of model inputs: `text (B, L, D)` and/or `audio (B, F, N + 1)`.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub text: Option<Tensor>,
    pub audio: Option<Tensor>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.text
            .as_ref()
            .or(self.audio.as_ref())
            .map_or(0, |t| t.shape()[0])
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn single(text: Option<&CharSequenceFeature>, audio: Option<&AcousticFeature>) -> Result<Self> {
        let text = text.map(|t| [t]);
        let audio = audio.map(|a| [a]);
        Self::from_features(text.as_ref().map(|t| &t[..]), audio.as_ref().map(|a| &a[..]))
    }

    pub fn from_features(
        text: Option<&[&CharSequenceFeature]>,
        audio: Option<&[&AcousticFeature]>,
    ) -> Result<Self> {
        fn stack<'m>(mats: impl ExactSizeIterator<Item = &'m crate::Matrix>) -> Result<Tensor> {
            let n = mats.len();
            let mut data = Vec::new();
            let mut shape = None;
            for m in mats {
                match shape {
                    None => shape = Some(m.shape()),
                    Some(s) if s != m.shape() => {
                        return Err(Error::shape(format!("batch mixes shapes {s:?} and {:?}", m.shape())))
                    }
                    _ => {}
                }
                data.extend_from_slice(m.as_slice());
            }
            let (r, c) = shape.ok_or_else(|| Error::invalid("empty batch"))?;
            Tensor::new(vec![n, r, c], data)
        }
        let text = text.map(|ts| stack(ts.iter().map(|t| &t.matrix))).transpose()?;
        let audio = audio.map(|az| stack(az.iter().map(|a| &a.matrix))).transpose()?;
        if let (Some(t), Some(a)) = (&text, &audio) {
            if t.shape()[0] != a.shape()[0] {
                return Err(Error::shape("text and audio batch sizes differ"));
            }
        }
        Ok(Self { text, audio })
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    kind: ModelKind,
    config: ModelConfig,
    params: ParamStore,
    text: Vec<TextPart>,
    audio: Option<AudioEncoder>,
    hidden: Dense,
    output: Dense,
}

impl Model {
    pub fn new(kind: ModelKind, config: ModelConfig) -> Result<Self> {
        config.validate(kind)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let c = &config;
        let mut features = 0;

        let mut text = Vec::new();
        for (i, part) in kind.text_parts().iter().enumerate() {
            let name = format!("text{i}");
            let p = match part {
                TextPartKind::Cnn => {
                    let stack = ConvStack::new(
                        &mut params,
                        &mut rng,
                        &format!("{name}.cnn"),
                        (c.text_len, c.text_dim),
                        &text_cnn_specs(c.text_dim),
                        Padding::Valid,
                        false,
                        0.0,
                    )?;
                    features += stack.flat_dim();
                    TextPart::Cnn(stack)
                }
                TextPartKind::BiLstm => {
                    let l = BiLstm::new(&mut params, &mut rng, &format!("{name}.bilstm"), c.text_dim, c.lstm_hidden)?;
                    features += l.output_dim();
                    TextPart::BiLstm(l)
                }
                TextPartKind::BiLstmAtt => {
                    let l = BiLstmAttention::new(
                        &mut params,
                        &mut rng,
                        &name,
                        c.text_dim,
                        c.lstm_hidden,
                        c.context_dim,
                    )?;
                    features += l.output_dim();
                    TextPart::BiLstmAtt(l)
                }
            };
            text.push(p);
        }

        let audio = if kind.uses_audio() {
            let cnn = ConvStack::new(
                &mut params,
                &mut rng,
                "audio.cnn",
                (c.audio_frames, c.audio_bins),
                &AUDIO_CNN,
                Padding::Same,
                true,
                c.dropout,
            )?;
            let cnn_proj = Dense::new(&mut params, &mut rng, "audio.cnn_proj", cnn.flat_dim(), c.fusion_proj_dim)?;
            let rnn = BiLstmAttention::new(&mut params, &mut rng, "audio", c.audio_bins, c.lstm_hidden, c.context_dim)?;
            let fuse = Dense::new(
                &mut params,
                &mut rng,
                "audio.fuse",
                c.fusion_proj_dim + rnn.output_dim(),
                c.fusion_proj_dim,
            )?;
            features += c.fusion_proj_dim;
            Some(AudioEncoder { cnn, cnn_proj, rnn, fuse })
        } else {
            None
        };

        let hidden = Dense::new(&mut params, &mut rng, "mlp.hidden", features, c.mlp_hidden)?;
        let k = c.label_space.size();
        let output = if c.zero_init_head {
            Dense::zeroed(&mut params, "mlp.output", c.mlp_hidden, k)?
        } else {
            Dense::new(&mut params, &mut rng, "mlp.output", c.mlp_hidden, k)?
        };
        Ok(Self {
            kind,
            config,
            params,
            text,
            audio,
            hidden,
            output,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn num_classes(&self) -> usize {
        self.config.label_space.size()
    }

    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Width of the vector entering the MLP head.
    pub fn fusion_dim(&self) -> usize {
        self.hidden.inputs
    }

    /// Shapes `(H, W, C)` after each audio conv block, if the model has audio.
    pub fn audio_cnn_shapes(&self) -> Option<Vec<(usize, usize, usize)>> {
        self.audio.as_ref().map(|_| {
            conv_stack_shapes(
                (self.config.audio_frames, self.config.audio_bins, 1),
                &AUDIO_CNN,
                Padding::Same,
            )
            .expect("validated at construction")
        })
    }

    fn check_input(&self, t: Option<&Tensor>, want: (usize, usize), what: &str, needed: bool) -> Result<()> {
        match (t, needed) {
            (None, true) => Err(Error::invalid(format!("{} needs {what} input", self.kind))),
            (Some(t), true) if t.shape().len() != 3 || (t.shape()[1], t.shape()[2]) != want => Err(Error::shape(format!(
                "{} expects {what} frames of {want:?}, got {:?}",
                self.kind,
                t.shape()
            ))),
            _ => Ok(()),
        }
    }

    /// Builds the forward pass into `g`.
    pub fn forward(&self, g: &mut Graph, batch: &Batch) -> Result<ForwardOutput> {
        let c = &self.config;
        self.check_input(batch.text.as_ref(), (c.text_len, c.text_dim), "text", self.kind.uses_text())?;
        self.check_input(
            batch.audio.as_ref(),
            (c.audio_frames, c.audio_bins),
            "audio",
            self.kind.uses_audio(),
        )?;
        let mut pieces = Vec::new();
        let mut attention = Vec::new();
        if self.kind.uses_text() {
            let x = g.input(batch.text.clone().expect("checked"));
            for part in &self.text {
                match part {
                    TextPart::Cnn(stack) => pieces.push(stack.forward(g, x)?),
                    TextPart::BiLstm(l) => pieces.push(l.summary(g, x)?),
                    TextPart::BiLstmAtt(l) => {
                        let a = l.forward(g, x)?;
                        attention.push(a.weights);
                        pieces.push(a.pooled);
                    }
                }
            }
        }
        if let Some(enc) = &self.audio {
            let x = g.input(batch.audio.clone().expect("checked"));
            let flat = enc.cnn.forward(g, x)?;
            let proj = enc.cnn_proj.forward(g, flat)?;
            let proj = g.relu(proj);
            let rnn = enc.rnn.forward(g, x)?;
            attention.push(rnn.weights);
            let both = g.concat(&[proj, rnn.pooled])?;
            let fused = enc.fuse.forward(g, both)?;
            pieces.push(g.relu(fused));
        }
        let joint = if pieces.len() == 1 { pieces[0] } else { g.concat(&pieces)? };
        let h = self.hidden.forward(g, joint)?;
        let h = g.relu(h);
        let h = g.dropout(h, c.dropout);
        let logits = self.output.forward(g, h)?;
        Ok(ForwardOutput { logits, attention })
    }

    /// Class probabilities for each batch row. Inference mode disables
    /// dropout and uses running batchnorm statistics; train mode samples
    /// dropout from `seed` and normalizes with batch statistics.
    pub fn predict_proba_batch(&self, batch: &Batch, mode: Mode, seed: u64) -> Result<Vec<Vec<f64>>> {
        let mut g = match mode {
            Mode::Infer => Graph::inference(&self.params),
            Mode::Train => Graph::new(&self.params, Mode::Train, seed),
        };
        let out = self.forward(&mut g, batch)?;
        let k = self.num_classes();
        Ok(g.value(out.logits)
            .chunks(k)
            .map(|row| {
                let mut p = row.to_vec();
                softmax_in_place(&mut p);
                p
            })
            .collect())
    }

    pub fn predict_proba(
        &self,
        text: Option<&CharSequenceFeature>,
        audio: Option<&AcousticFeature>,
    ) -> Result<Vec<f64>> {
        let batch = Batch::single(text, audio)?;
        Ok(self.predict_proba_batch(&batch, Mode::Infer, 0)?.remove(0))
    }

    /// Attention weights of every attention-pooled encoder for one example
    /// (text first, then audio).
    pub fn attention_weights(
        &self,
        text: Option<&CharSequenceFeature>,
        audio: Option<&AcousticFeature>,
    ) -> Result<Vec<Vec<f64>>> {
        let batch = Batch::single(text, audio)?;
        let mut g = Graph::inference(&self.params);
        let out = self.forward(&mut g, &batch)?;
        Ok(out.attention.iter().map(|&v| g.value(v).to_vec()).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        write_checkpoint(&mut w, self.kind.name(), serde_json::to_value(&self.config)?, &self.params)?;
        use std::io::Write;
        w.flush()?;
        Ok(())
    }

    /// Loads a checkpoint; with `expected`, a different recorded kind is an error.
    pub fn load(path: impl AsRef<Path>, expected: Option<ModelKind>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let ck = read_checkpoint(std::io::BufReader::new(file))?;
        let kind: ModelKind = ck.header.model_kind.parse()?;
        if let Some(want) = expected {
            if want != kind {
                return Err(Error::Checkpoint(format!(
                    "checkpoint holds a `{kind}` model, expected `{want}`"
                )));
            }
        }
        let config: ModelConfig = serde_json::from_value(ck.header.config.clone())?;
        let mut model = Model::new(kind, config)?;
        ck.restore_into(&mut model.params)?;
        Ok(model)
    }
}

fn argmax(p: &[f64]) -> usize {
    // first maximum wins, so ties go to the lowest class code
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

pub fn argmax_label(p: &[f64]) -> usize {
    argmax(p)
}

/// Seven-way sieve probabilities for one transcript.
pub fn fci_forward(feat: &CharSequenceFeature, model: &Model, mode: Mode, seed: u64) -> Result<Vec<f64>> {
    if model.num_classes() != 7 || model.kind().uses_audio() {
        return Err(Error::invalid(format!("{} is not a seven-way text model", model.kind())));
    }
    let batch = Batch::from_features(Some(std::slice::from_ref(&feat)), None)?;
    Ok(model.predict_proba_batch(&batch, mode, seed)?.remove(0))
}

/// Six-way audio-text probabilities for one utterance.
pub fn three_a_forward(
    audio: &AcousticFeature,
    text: &CharSequenceFeature,
    model: &Model,
    mode: Mode,
    seed: u64,
) -> Result<Vec<f64>> {
    if model.kind() != ModelKind::ThreeA {
        return Err(Error::invalid(format!("{} is not the audio-text model", model.kind())));
    }
    let batch = Batch::from_features(Some(std::slice::from_ref(&text)), Some(std::slice::from_ref(&audio)))?;
    Ok(model.predict_proba_batch(&batch, mode, seed)?.remove(0))
}

pub fn build_baseline(kind: BaselineKind, cfg: ModelConfig) -> Result<Model> {
    Model::new(ModelKind::Baseline(kind), cfg)
}
