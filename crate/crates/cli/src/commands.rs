use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use intent_sieve::cascade::{AudioSource, Cascade, CascadeConfig, FallbackPolicy, RouteItem};
use intent_sieve::corpus::{
    fleiss_kappa, load_text_corpus, majority_vote, rating_table, split, write_manifest, write_text_corpus,
    SpeechExample, TextExample, Vote,
};
use intent_sieve::dsp::{extract_feature, read_wav, write_feature_dump, write_wav, Waveform};
use intent_sieve::eval::{confusion, metrics, timed_inference};
use intent_sieve::models::{argmax_label, BaselineKind, Model, ModelKind};
use intent_sieve::synth::{synthetic_corpus, synthetic_vocab, SynthConfig};
use intent_sieve::textenc::{load_char_vectors, write_char_vectors, CharVocab};
use intent_sieve::train::{train_model, Example, TrainConfig, TrainReport};
use intent_sieve::{Error, IntentLabel6, IntentLabel7, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Settings;
use crate::data::{at, encode_text, ensure_dir, require_exists, write_json, write_jsonl, Manifest, Tagged};
use crate::{
    CompareArgs, EvalArgs, Fallback, FeaturizeArgs, KappaArgs, Outcome, RatingFormat, RouteArgs, SynthArgs, TrainArgs,
};

pub fn featurize(args: FeaturizeArgs, mut settings: Settings, out: Option<PathBuf>) -> Result<Outcome> {
    settings.features.apply_log |= args.apply_log;
    settings.features.validate()?;
    let mut inputs = args.inputs;
    if let Some(m) = &args.manifest {
        let manifest = Manifest::load(m)?;
        inputs.extend((0..manifest.rows.len()).filter_map(|i| manifest.audio_path(i)));
    }
    if inputs.is_empty() {
        return Err(Error::InvalidInput("no audio inputs given".into()));
    }
    let out = out.unwrap_or_else(|| PathBuf::from("features"));
    ensure_dir(&out)?;

    let mut targets = Vec::with_capacity(inputs.len());
    let mut seen = std::collections::HashSet::new();
    for p in &inputs {
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let target = if stem.is_empty() || !seen.insert(stem.clone()) {
            Err(Error::InvalidInput(format!("{}: duplicate or empty output name", p.display())))
        } else {
            Ok(out.join(format!("{stem}.isf")))
        };
        targets.push(target);
    }
    let cfg = settings.features;
    let work = |(input, target): (&PathBuf, &Result<PathBuf>)| -> Result<()> {
        let target = match target {
            Ok(t) => t,
            Err(e) => return Err(Error::InvalidInput(e.to_string())),
        };
        let w = read_wav(input).map_err(|e| at(input, e))?;
        let f = extract_feature(&w, &cfg).map_err(|e| at(input, e))?;
        let mut file = BufWriter::new(File::create(target)?);
        write_feature_dump(&mut file, &f.matrix)?;
        file.flush()?;
        Ok(())
    };
    let results: Vec<Result<()>> = if args.parallel {
        inputs.par_iter().zip(targets.par_iter()).map(work).collect()
    } else {
        inputs.iter().zip(targets.iter()).map(work).collect()
    };
    let mut failures = 0;
    for r in &results {
        if let Err(e) = r {
            failures += 1;
            eprintln!("error: {e}");
        }
    }
    println!(
        "featurized {} of {} files into {} ({} failed)",
        results.len() - failures,
        results.len(),
        out.display(),
        failures
    );
    Ok(Outcome { failures })
}

fn parse_stage(stage: &str) -> Result<ModelKind> {
    let s = stage.trim();
    match s.split_once(':') {
        Some((prefix, kind)) if prefix.eq_ignore_ascii_case("baseline") => match kind.parse()? {
            k @ ModelKind::Baseline(_) => Ok(k),
            _ => Err(Error::InvalidConfig(format!("`{kind}` is not a baseline"))),
        },
        Some(_) => Err(Error::InvalidConfig(format!("unknown stage `{stage}`"))),
        None => match s.parse()? {
            k @ (ModelKind::Fci | ModelKind::ThreeA) => Ok(k),
            _ => Err(Error::InvalidConfig(format!("use `baseline:{s}` for baselines"))),
        },
    }
}

/// Featurized examples for `kind` with the label it trains on, plus the
/// class used to stratify the split.
fn training_examples(
    kind: ModelKind,
    corpus: Option<&[TextExample]>,
    manifest: Option<&Manifest>,
    vocab: &CharVocab,
    settings: &Settings,
) -> Result<Vec<Example>> {
    let text = |t: &str| -> Result<_> {
        if kind.uses_text() {
            Ok(Some(encode_text(t, vocab, settings.max_chars)?))
        } else {
            Ok(None)
        }
    };
    if !kind.uses_audio() {
        if let Some(rows) = corpus {
            let mut out = Vec::new();
            for (i, r) in rows.iter().enumerate() {
                let label = match kind {
                    ModelKind::Baseline(BaselineKind::OnlyText6) => match r.label.to_six() {
                        Some(l) => l.code(),
                        None => continue,
                    },
                    _ => r.label.code(),
                };
                let text = text(&r.text).map_err(|e| Error::InvalidInput(format!("corpus line {}: {e}", i + 1)))?;
                out.push(Example { text, audio: None, label });
            }
            return Ok(out);
        }
    }
    let m = manifest.ok_or_else(|| Error::InvalidInput(format!("{kind} needs --manifest")))?;
    let mut out = Vec::new();
    for (i, r) in m.rows.iter().enumerate() {
        let label = match kind {
            ModelKind::Baseline(BaselineKind::OnlyText6) => match r.label7.to_six() {
                Some(l) => l.code(),
                None => continue,
            },
            k if k.label_space().size() == 6 => gold6(r, i)?.code(),
            _ => r.label7.code(),
        };
        let audio = if kind.uses_audio() {
            Some(m.features(i, &settings.features)?)
        } else {
            None
        };
        let text = text(&r.text).map_err(|e| Error::InvalidInput(format!("manifest row {}: {e}", i + 1)))?;
        out.push(Example { text, audio, label });
    }
    Ok(out)
}

fn gold6(r: &SpeechExample, i: usize) -> Result<IntentLabel6> {
    r.gold6()
        .ok_or_else(|| Error::InvalidInput(format!("manifest row {} has no six-way label", i + 1)))
}

fn split_examples(examples: Vec<Example>, settings: &Settings) -> Result<(Vec<Example>, Vec<Example>)> {
    let tags: Vec<Tagged> = examples
        .iter()
        .enumerate()
        .map(|(index, e)| Tagged { index, class: e.label })
        .collect();
    let (tr, va) = split(&tags, &settings.split)?;
    let mut slots: Vec<Option<Example>> = examples.into_iter().map(Some).collect();
    let mut take = |ts: Vec<Tagged>| -> Vec<Example> { ts.iter().map(|t| slots[t.index].take().expect("split is a partition")).collect() };
    let train = take(tr);
    let val = take(va);
    Ok((train, val))
}

fn load_vocab(path: &Path) -> Result<CharVocab> {
    require_exists(path)?;
    load_char_vectors(path, None).map_err(|e| at(path, e))
}

fn fit(kind: ModelKind, train: &[Example], val: &[Example], vocab: &CharVocab, settings: &Settings) -> Result<(Model, TrainReport)> {
    let cfg = settings.model_config(kind, vocab.dim())?;
    let mut model = Model::new(kind, cfg)?;
    info!("training {kind} on {} examples ({} held out)", train.len(), val.len());
    let report = train_model(&mut model, train, val, &settings.train)?;
    Ok((model, report))
}

fn train_config_with(settings: &Settings, epochs: Option<usize>) -> TrainConfig {
    let mut t = settings.train.clone();
    if let Some(e) = epochs {
        t.epochs = e;
    }
    t
}

pub fn train(args: TrainArgs, mut settings: Settings, out: Option<PathBuf>) -> Result<Outcome> {
    let kind = parse_stage(&args.stage)?;
    settings.train = train_config_with(&settings, args.epochs);
    let vocab = load_vocab(&args.vectors)?;
    let corpus = match &args.corpus {
        Some(p) => {
            require_exists(p)?;
            Some(load_text_corpus(p).map_err(|e| at(p, e))?)
        }
        None => None,
    };
    let manifest = args.manifest.as_deref().map(Manifest::load).transpose()?;
    if corpus.is_none() && manifest.is_none() {
        return Err(Error::InvalidInput("give --corpus or --manifest".into()));
    }
    let examples = training_examples(kind, corpus.as_deref(), manifest.as_ref(), &vocab, &settings)?;
    let (train, val) = split_examples(examples, &settings)?;
    let (model, report) = fit(kind, &train, &val, &vocab, &settings)?;

    let out = out.unwrap_or_else(|| PathBuf::from("runs"));
    ensure_dir(&out)?;
    let ckpt = out.join(format!("{}.isv", kind.name()));
    model.save(&ckpt)?;
    write_jsonl(&out.join(format!("{}.log.jsonl", kind.name())), &report.epochs)?;
    write_json(
        &out.join(format!("{}.report.json", kind.name())),
        &json!({
            "kind": kind.name(),
            "train_size": train.len(),
            "val_size": val.len(),
            "class_weights": report.class_weights,
            "final_train_accuracy": report.final_train_accuracy,
            "stopped_early": report.stopped_early,
            "last_epoch": report.epochs.last(),
        }),
    )?;
    let last = report.epochs.last();
    println!(
        "trained {kind}: {} epochs, train accuracy {:.4}, val accuracy {}, val macro-F1 {} -> {}",
        report.epochs.len(),
        report.final_train_accuracy,
        fmt_opt(last.and_then(|e| e.val_accuracy)),
        fmt_opt(last.and_then(|e| e.val_macro_f1)),
        ckpt.display()
    );
    Ok(Outcome::default())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn load_model(path: &Path, kind: ModelKind) -> Result<Model> {
    require_exists(path)?;
    Model::load(path, Some(kind)).map_err(|e| at(path, e))
}

fn cascade_config(settings: &Settings, fci: &Model, three_a: &Model) -> Result<CascadeConfig> {
    let c = three_a.config();
    if c.audio_frames != settings.features.tail_frames || c.audio_bins != settings.features.feature_dim() {
        return Err(Error::InvalidConfig(format!(
            "three_a expects ({}, {}) audio features, feature settings give ({}, {})",
            c.audio_frames,
            c.audio_bins,
            settings.features.tail_frames,
            settings.features.feature_dim()
        )));
    }
    Ok(CascadeConfig {
        features: settings.features,
        max_chars: fci.config().text_len,
        fallback: settings.fallback,
        margin_threshold: None,
    })
}

pub fn route(args: RouteArgs, mut settings: Settings, out: Option<PathBuf>) -> Result<Outcome> {
    if let Some(f) = args.fallback {
        settings.fallback = match f {
            Fallback::Error => FallbackPolicy::Error,
            Fallback::SecondBest => FallbackPolicy::SecondBest,
        };
    }
    let fci = load_model(&args.fci, ModelKind::Fci)?;
    let three_a = load_model(&args.three_a, ModelKind::ThreeA)?;
    let vocab = load_vocab(&args.vectors)?;
    let manifest = Manifest::load(&args.manifest)?;
    let mut cfg = cascade_config(&settings, &fci, &three_a)?;
    cfg.margin_threshold = args.margin;
    let cascade = Cascade::new(&fci, &three_a, &vocab, cfg)?;
    let items: Vec<RouteItem> = manifest
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| RouteItem {
            text: r.text.clone(),
            audio: manifest.audio_path(i),
        })
        .collect();
    let (results, report) = cascade.route_batch(&items, args.parallel);

    let out = out.unwrap_or_else(|| PathBuf::from("routes"));
    ensure_dir(&out)?;
    let mut failures = 0;
    let mut lines = Vec::with_capacity(results.len());
    for (i, r) in results.iter().enumerate() {
        let mut v = match r {
            Ok(p) => serde_json::to_value(p)?,
            Err(e) => {
                failures += 1;
                eprintln!("error: manifest row {}: {e}", i + 1);
                json!({ "error": e.to_string() })
            }
        };
        let obj = v.as_object_mut().expect("predictions serialize to objects");
        obj.insert("id".into(), json!(i));
        lines.push(v);
    }
    write_jsonl(&out.join("predictions.jsonl"), &lines)?;
    write_json(&out.join("cost_report.json"), &report)?;
    println!(
        "routed {} utterances: {} text only, {} audio aided, {} failed; text {:.3} ms, audio {:.3} ms",
        report.n_total,
        report.n_text_only,
        report.n_audio_aided,
        failures,
        report.text_ns as f64 / 1e6,
        report.audio_ns as f64 / 1e6
    );
    Ok(Outcome { failures })
}

/// Labels from a predictions file: JSON objects with a `label` field, or
/// bare labels one per line.
fn read_predictions(path: &Path, space: u8) -> Result<Vec<usize>> {
    require_exists(path)?;
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let raw = if t.starts_with('{') {
            let v: Value = serde_json::from_str(t).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
            match v.get("label") {
                Some(Value::String(s)) => s.clone(),
                Some(Value::Number(n)) => n.to_string(),
                _ => {
                    let why = v.get("error").and_then(Value::as_str).unwrap_or("no label field");
                    return Err(Error::InvalidInput(format!("prediction on line {} has no label ({why})", i + 1)));
                }
            }
        } else {
            t.to_string()
        };
        out.push(parse_label(&raw, space, i + 1)?);
    }
    Ok(out)
}

fn parse_label(raw: &str, space: u8, line: usize) -> Result<usize> {
    let unknown = || Error::UnknownLabel {
        line,
        label: raw.to_string(),
    };
    let l7: IntentLabel7 = raw.parse().map_err(|_| unknown())?;
    if space == 6 {
        l7.to_six().map(|l| l.code()).ok_or_else(unknown)
    } else {
        Ok(l7.code())
    }
}

fn names(space: u8) -> Vec<String> {
    if space == 6 {
        IntentLabel6::ALL.iter().map(|l| l.short().to_string()).collect()
    } else {
        IntentLabel7::ALL.iter().map(|l| l.short().to_string()).collect()
    }
}

pub fn eval(args: EvalArgs, out: Option<PathBuf>) -> Result<Outcome> {
    let (space, answers) = if let Some(m) = &args.manifest {
        let manifest = Manifest::load(m)?;
        let space = args.space.unwrap_or(6);
        let answers = manifest
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| if space == 6 { gold6(r, i).map(|l| l.code()) } else { Ok(r.label7.code()) })
            .collect::<Result<Vec<_>>>()?;
        (space, answers)
    } else {
        let p = args.corpus.as_deref().expect("clap requires one source");
        require_exists(p)?;
        let rows = load_text_corpus(p).map_err(|e| at(p, e))?;
        let space = args.space.unwrap_or(7);
        let answers = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                if space == 6 {
                    r.label.to_six().map(|l| l.code()).ok_or_else(|| {
                        Error::InvalidInput(format!("corpus line {} is intonation-dependent; score it in the 7-way space", i + 1))
                    })
                } else {
                    Ok(r.label.code())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        (space, answers)
    };
    let preds = read_predictions(&args.predictions, space)?;
    if preds.len() != answers.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions for {} gold labels",
            preds.len(),
            answers.len()
        )));
    }
    let k = space as usize;
    let names = names(space);
    let cm = confusion(&preds, &answers, k)?.with_names(&names)?;
    let report = metrics(&cm)?;
    print!("{}\n{}", cm.to_table(), report.to_table(&names));
    if let Some(dir) = out {
        ensure_dir(&dir)?;
        write_json(&dir.join("eval.json"), &json!({ "space": space, "confusion": cm, "report": report }))?;
    }
    Ok(Outcome::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    SpeechOnly,
    TextOnly,
    Multimodal,
    Cascade,
}

impl Family {
    fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" | "only_speech" | "speech" => Ok(Self::SpeechOnly),
            "b" | "only_text6" | "only_text" | "text" => Ok(Self::TextOnly),
            "c" | "three_a" | "3a" | "multimodal" => Ok(Self::Multimodal),
            "d" | "cascade" | "fci+three_a" => Ok(Self::Cascade),
            _ => Err(Error::InvalidConfig(format!("unknown model `{s}`; use a, b, c, or d"))),
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Self::SpeechOnly => "a",
            Self::TextOnly => "b",
            Self::Multimodal => "c",
            Self::Cascade => "d",
        }
    }

    fn describe(self) -> &'static str {
        match self {
            Self::SpeechOnly => "only speech",
            Self::TextOnly => "only text (without IU)",
            Self::Multimodal => "audio + text (3A)",
            Self::Cascade => "FCI -> 3A cascade",
        }
    }
}

/// Timed passes per model, after one untimed warm-up pass.
const TIMED_RUNS: usize = 1;

#[derive(Debug, Serialize)]
struct CompareRow {
    model: &'static str,
    description: &'static str,
    accuracy: f64,
    macro_f1: f64,
    wall_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    audio_aided: Option<usize>,
}

pub fn compare(args: CompareArgs, mut settings: Settings, out: Option<PathBuf>) -> Result<Outcome> {
    let families = args
        .models
        .iter()
        .map(|s| Family::parse(s))
        .collect::<Result<Vec<_>>>()?;
    if families.is_empty() {
        return Err(Error::InvalidInput("no models requested".into()));
    }
    settings.train = train_config_with(&settings, args.epochs);
    let vocab = load_vocab(&args.vectors)?;
    let manifest = Manifest::load(&args.manifest)?;
    let (tr, va) = split(&manifest.rows, &settings.split)?;
    let pick = |subset: Vec<SpeechExample>| Manifest {
        rows: subset,
        base: manifest.base.clone(),
    };
    let (train_m, val_m) = (pick(tr), pick(va));
    let answers = val_m
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| gold6(r, i).map(|l| l.code()))
        .collect::<Result<Vec<_>>>()?;
    let waves = (0..val_m.rows.len()).map(|i| val_m.waveform(i)).collect::<Result<Vec<_>>>()?;

    let trained = |kind: ModelKind| -> Result<Model> {
        let examples = training_examples(kind, None, Some(&train_m), &vocab, &settings)?;
        let (model, _) = fit(kind, &examples, &[], &vocab, &settings)?;
        Ok(model)
    };
    let needs = |f: Family| families.contains(&f);
    let three_a = if needs(Family::Multimodal) || needs(Family::Cascade) {
        Some(trained(ModelKind::ThreeA)?)
    } else {
        None
    };

    let fc = settings.features;
    let max_chars = settings.max_chars;
    let mut rows = Vec::new();
    for &f in &families {
        let (run, audio_aided) = match f {
            Family::SpeechOnly => {
                let m = trained(ModelKind::Baseline(BaselineKind::OnlySpeech))?;
                let runner = || per_utterance(&m, &val_m.rows, &waves, &vocab, max_chars, &fc);
                (timed_inference(runner, &answers, 6, TIMED_RUNS)?, None)
            }
            Family::TextOnly => {
                let m = trained(ModelKind::Baseline(BaselineKind::OnlyText6))?;
                let runner = || per_utterance(&m, &val_m.rows, &waves, &vocab, max_chars, &fc);
                (timed_inference(runner, &answers, 6, TIMED_RUNS)?, None)
            }
            Family::Multimodal => {
                let m = three_a.as_ref().expect("trained above");
                let runner = || per_utterance(m, &val_m.rows, &waves, &vocab, max_chars, &fc);
                (timed_inference(runner, &answers, 6, TIMED_RUNS)?, None)
            }
            Family::Cascade => {
                let fci = trained(ModelKind::Fci)?;
                let m3 = three_a.as_ref().expect("trained above");
                let cfg = cascade_config(&settings, &fci, m3)?;
                let cascade = Cascade::new(&fci, m3, &vocab, cfg)?;
                let runner = || -> Result<Vec<usize>> {
                    val_m
                        .rows
                        .iter()
                        .zip(&waves)
                        .map(|(r, w)| Ok(cascade.route(&r.text, AudioSource::Waveform(w))?.label.code()))
                        .collect()
                };
                let run = timed_inference(runner, &answers, 6, TIMED_RUNS)?;
                let routed = cascade.acoustic_extractions() / (TIMED_RUNS + 1);
                (run, Some(routed))
            }
        };
        let r = run.into_iter().next().expect("one timed run");
        rows.push(CompareRow {
            model: f.symbol(),
            description: f.describe(),
            accuracy: r.report.accuracy,
            macro_f1: r.report.macro_f1,
            wall_ms: r.wall_ns as f64 / 1e6,
            audio_aided,
        });
    }

    println!("{:<5} {:<24} {:>9} {:>9} {:>11}", "model", "", "accuracy", "macro-F1", "time (ms)");
    for r in &rows {
        println!(
            "{:<5} {:<24} {:>9.4} {:>9.4} {:>11.3}",
            r.model, r.description, r.accuracy, r.macro_f1, r.wall_ms
        );
    }
    println!("(validation set of {} utterances)", answers.len());
    if let Some(dir) = out {
        ensure_dir(&dir)?;
        write_json(&dir.join("compare.json"), &json!({ "validation_size": answers.len(), "rows": rows }))?;
    }
    Ok(Outcome::default())
}

/// Per-utterance inference, including feature extraction, for a single model.
fn per_utterance(
    model: &Model,
    rows: &[SpeechExample],
    waves: &[Waveform],
    vocab: &CharVocab,
    max_chars: usize,
    fc: &intent_sieve::dsp::FeatureConfig,
) -> Result<Vec<usize>> {
    let kind = model.kind();
    rows.iter()
        .zip(waves)
        .map(|(r, w)| {
            let text = if kind.uses_text() {
                Some(encode_text(&r.text, vocab, max_chars)?)
            } else {
                None
            };
            let audio = if kind.uses_audio() { Some(extract_feature(w, fc)?) } else { None };
            Ok(argmax_label(&model.predict_proba(text.as_ref(), audio.as_ref())?))
        })
        .collect()
}

pub fn kappa(args: KappaArgs, out: Option<PathBuf>) -> Result<Outcome> {
    require_exists(&args.ratings)?;
    let reader = BufReader::new(File::open(&args.ratings)?);
    let mut table = Vec::new();
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields = t.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty());
        match args.format {
            RatingFormat::Labels => {
                let labels = fields
                    .map(|s| {
                        s.parse::<IntentLabel7>().map_err(|_| Error::UnknownLabel {
                            line: i + 1,
                            label: s.to_string(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                items.push(labels);
            }
            RatingFormat::Counts => {
                let row = fields
                    .map(|s| {
                        s.parse::<usize>().map_err(|e| Error::Parse {
                            line: i + 1,
                            msg: format!("`{s}`: {e}"),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                table.push(row);
            }
        }
    }
    if matches!(args.format, RatingFormat::Labels) {
        table = rating_table(&items);
    }
    let kappa = fleiss_kappa(&table)?;
    let raters: usize = table[0].iter().sum();
    let mut summary = json!({ "kappa": kappa, "items": table.len(), "raters": raters });
    if !items.is_empty() {
        let unresolved = items.iter().filter(|l| majority_vote(l) == Vote::Unresolved).count();
        summary["unresolved"] = json!(unresolved);
        if unresolved > 0 {
            warn!("{unresolved} item(s) have no majority label");
        }
    }
    println!("fleiss kappa {kappa:.4} over {} items, {raters} raters", table.len());
    if let Some(dir) = out {
        ensure_dir(&dir)?;
        write_json(&dir.join("kappa.json"), &summary)?;
    }
    Ok(Outcome::default())
}

pub fn synth(args: SynthArgs, settings: Settings, out: Option<PathBuf>) -> Result<Outcome> {
    if args.dim == 0 {
        return Err(Error::InvalidConfig("vector dimension must be positive".into()));
    }
    let cfg = SynthConfig {
        sample_rate_hz: settings.features.sample_rate_hz,
        ..SynthConfig::default()
    };
    let utts = synthetic_corpus(args.n, args.iu_fraction, settings.seed, &cfg)?;
    let vocab = synthetic_vocab(args.dim, settings.seed.wrapping_add(1));
    let out = out.unwrap_or_else(|| PathBuf::from("synth"));
    ensure_dir(&out.join("audio"))?;
    let mut manifest = Vec::with_capacity(utts.len());
    let mut corpus = Vec::with_capacity(utts.len());
    for (i, u) in utts.iter().enumerate() {
        let rel = format!("audio/utt{i:04}.wav");
        write_wav(out.join(&rel), &u.waveform)?;
        manifest.push(SpeechExample {
            audio_path: rel,
            text: u.text.clone(),
            label7: u.label7,
            label6: (u.label7 == IntentLabel7::IntoDepU).then_some(u.label6),
        });
        corpus.push(TextExample {
            text: u.text.clone(),
            label: u.label7,
        });
    }
    write_manifest(BufWriter::new(File::create(out.join("manifest.jsonl"))?), &manifest)?;
    write_text_corpus(BufWriter::new(File::create(out.join("corpus.tsv"))?), &corpus)?;
    write_char_vectors(BufWriter::new(File::create(out.join("vectors.txt"))?), &vocab)?;
    println!("wrote {} utterances to {}", utts.len(), out.display());
    Ok(Outcome::default())
}
