//! Corpus ingestion, train/validation splits, class weights, and annotation
//! agreement.
//!
//! Text corpora are UTF-8 TSV (`label<TAB>text`); speech manifests are
//! JSON lines `{"audio": .., "text": .., "label7": .., "label6": ..}`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{IntentLabel6, IntentLabel7};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextExample {
    pub text: String,
    pub label: IntentLabel7,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeechExample {
    #[serde(rename = "audio")]
    pub audio_path: String,
    pub text: String,
    pub label7: IntentLabel7,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label6: Option<IntentLabel6>,
}

impl SpeechExample {
    /// The six-way answer: the disambiguated label, or the sieve label
    /// itself for clear-cut utterances.
    pub fn gold6(&self) -> Option<IntentLabel6> {
        self.label6.or_else(|| self.label7.to_six())
    }

    /// Resolves a relative audio path against the manifest's directory.
    pub fn audio_path_in(&self, base: &Path) -> PathBuf {
        let p = Path::new(&self.audio_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    fn validate(&self, line: usize) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::Parse {
                line,
                msg: "empty transcript".into(),
            });
        }
        if self.label7 == IntentLabel7::IntoDepU && self.label6.is_none() {
            return Err(Error::Parse {
                line,
                msg: "intonation-dependent utterance without label6".into(),
            });
        }
        Ok(())
    }
}

/// Anything carrying a class code, for splitting and weighting.
pub trait Labeled {
    fn class(&self) -> usize;
}

impl Labeled for TextExample {
    fn class(&self) -> usize {
        self.label.code()
    }
}

impl Labeled for SpeechExample {
    fn class(&self) -> usize {
        self.label7.code()
    }
}

pub fn load_text_corpus(path: impl AsRef<Path>) -> Result<Vec<TextExample>> {
    let file = std::fs::File::open(path)?;
    parse_text_corpus(std::io::BufReader::new(file))
}

pub fn parse_text_corpus<R: BufRead>(input: R) -> Result<Vec<TextExample>> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (label, text) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: line_no,
            msg: "expected `label<TAB>text`".into(),
        })?;
        let label: IntentLabel7 = label.parse().map_err(|_| Error::UnknownLabel {
            line: line_no,
            label: label.to_string(),
        })?;
        if text.trim().is_empty() {
            return Err(Error::Parse {
                line: line_no,
                msg: "empty transcript".into(),
            });
        }
        out.push(TextExample {
            text: text.to_string(),
            label,
        });
    }
    Ok(out)
}

pub fn write_text_corpus<W: Write>(mut out: W, examples: &[TextExample]) -> Result<()> {
    for e in examples {
        writeln!(out, "{}\t{}", e.label.name(), e.text)?;
    }
    Ok(())
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<SpeechExample>> {
    let file = std::fs::File::open(path)?;
    parse_manifest(std::io::BufReader::new(file))
}

pub fn parse_manifest<R: BufRead>(input: R) -> Result<Vec<SpeechExample>> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: SpeechExample = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        ex.validate(line_no)?;
        out.push(ex);
    }
    Ok(out)
}

pub fn write_manifest<W: Write>(mut out: W, examples: &[SpeechExample]) -> Result<()> {
    for e in examples {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_ratio: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_ratio: 0.9,
            seed: 42,
            stratified: true,
        }
    }
}

/// Seeded train/validation split. Stratified splits take
/// `round(ratio * n_c)` of each class (leaving at least one for
/// validation); classes with a single example go wholly to training.
/// Both halves keep the input order.
pub fn split<T: Labeled + Clone>(examples: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>)> {
    if !(spec.train_ratio > 0.0 && spec.train_ratio < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train ratio {} outside (0, 1)",
            spec.train_ratio
        )));
    }
    if spec.stratified && examples.len() < 10 {
        return Err(Error::invalid(format!(
            "stratified split needs at least 10 examples, got {}",
            examples.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut in_train = vec![false; examples.len()];
    let groups: Vec<Vec<usize>> = if spec.stratified {
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, e) in examples.iter().enumerate() {
            by_class.entry(e.class()).or_default().push(i);
        }
        by_class.into_values().collect()
    } else {
        vec![(0..examples.len()).collect()]
    };
    for mut idx in groups {
        let n = idx.len();
        if spec.stratified && n < 2 {
            warn!("class {} has {n} example(s); keeping it in the training split", examples[idx[0]].class());
            idx.iter().for_each(|&i| in_train[i] = true);
            continue;
        }
        let n_train = ((spec.train_ratio * n as f64).round() as usize).min(n.saturating_sub(1));
        idx.shuffle(&mut rng);
        idx[..n_train].iter().for_each(|&i| in_train[i] = true);
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (e, t) in examples.iter().zip(in_train) {
        if t {
            train.push(e.clone());
        } else {
            val.push(e.clone());
        }
    }
    Ok((train, val))
}

/// Per-class counts over `k` classes.
pub fn class_counts<T: Labeled>(examples: &[T], k: usize) -> Vec<usize> {
    let mut counts = vec![0; k];
    for e in examples {
        counts[e.class()] += 1;
    }
    counts
}

/// Balanced inverse-frequency weights `total / (K * count_c)`.
pub fn class_weights(counts: &[usize]) -> Result<Vec<f64>> {
    if counts.is_empty() {
        return Err(Error::invalid("no classes"));
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::invalid(format!("class {c} has no examples")));
    }
    let total: usize = counts.iter().sum();
    let k = counts.len() as f64;
    Ok(counts.iter().map(|&n| total as f64 / (k * n as f64)).collect())
}

/// Fleiss' kappa over an `(items, categories)` table of rater counts.
/// Every row must sum to the same number of raters `n >= 2`.
pub fn fleiss_kappa(ratings: &[Vec<usize>]) -> Result<f64> {
    let first = ratings.first().ok_or_else(|| Error::invalid("no items"))?;
    let k = first.len();
    let n: usize = first.iter().sum();
    if n < 2 {
        return Err(Error::invalid("fleiss' kappa needs at least two raters per item"));
    }
    for (i, row) in ratings.iter().enumerate() {
        if row.len() != k {
            return Err(Error::invalid(format!("item {i} has {} categories, expected {k}", row.len())));
        }
        let s: usize = row.iter().sum();
        if s != n {
            return Err(Error::invalid(format!("item {i} has {s} ratings, expected {n}")));
        }
    }
    let items = ratings.len() as f64;
    let nf = n as f64;
    let mut p_bar = 0.0;
    let mut totals = vec![0usize; k];
    for row in ratings {
        let sq: usize = row.iter().map(|&c| c * c).sum();
        p_bar += (sq - n) as f64 / (nf * (nf - 1.0));
        for (t, &c) in totals.iter_mut().zip(row) {
            *t += c;
        }
    }
    p_bar /= items;
    let p_e: f64 = totals
        .iter()
        .map(|&t| {
            let p = t as f64 / (items * nf);
            p * p
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return if (1.0 - p_bar).abs() < 1e-15 {
            Ok(1.0)
        } else {
            Err(Error::invalid("degenerate ratings: expected agreement is 1"))
        };
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Builds the count table for [`fleiss_kappa`] from per-item annotator labels.
pub fn rating_table(labels: &[Vec<IntentLabel7>]) -> Vec<Vec<usize>> {
    labels
        .iter()
        .map(|item| {
            let mut row = vec![0; IntentLabel7::ALL.len()];
            for l in item {
                row[l.code()] += 1;
            }
            row
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Vote {
    Decided(IntentLabel7),
    /// Tied plurality, left for manual adjudication.
    Unresolved,
}

pub fn majority_vote(labels: &[IntentLabel7]) -> Vote {
    let mut counts = [0usize; 7];
    for l in labels {
        counts[l.code()] += 1;
    }
    let max = counts.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return Vote::Unresolved;
    }
    let mut winners = counts.iter().enumerate().filter(|(_, &c)| c == max);
    match (winners.next(), winners.next()) {
        (Some((code, _)), None) => Vote::Decided(IntentLabel7::ALL[code]),
        _ => Vote::Unresolved,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn ex(label: IntentLabel7, i: usize) -> TextExample {
        TextExample {
            text: format!("문장 {i}"),
            label,
        }
    }

    #[test]
    fn parses_tsv_line() {
        let v = parse_text_corpus("question\t천천히 가고 있어\n".as_bytes()).unwrap();
        assert_eq!(v, vec![TextExample {
            text: "천천히 가고 있어".into(),
            label: IntentLabel7::Question
        }]);
        let v = parse_text_corpus("2\t가\nIU\t나\n".as_bytes()).unwrap();
        assert_eq!(v[1].label, IntentLabel7::IntoDepU);
    }

    #[test]
    fn unknown_label_reports_line() {
        let err = parse_text_corpus("statement\t가\nopinion\t나\n".as_bytes()).unwrap_err();
        match err {
            Error::UnknownLabel { line, label } => {
                assert_eq!(line, 2);
                assert_eq!(label, "opinion");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn empty_corpus_is_empty() {
        assert!(parse_text_corpus(&b""[..]).unwrap().is_empty());
    }

    #[test]
    fn manifest_requires_label6_for_iu() {
        let ok = r#"{"audio":"a.wav","text":"가","label7":"iu","label6":"question"}"#;
        let v = parse_manifest(ok.as_bytes()).unwrap();
        assert_eq!(v[0].gold6(), Some(IntentLabel6::Question));
        let bad = r#"{"audio":"a.wav","text":"가","label7":"intonation_dependent"}"#;
        assert!(matches!(parse_manifest(bad.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn unstratified_ninety_ten() {
        let xs: Vec<TextExample> = (0..100).map(|i| ex(IntentLabel7::ALL[i % 7], i)).collect();
        let spec = SplitSpec {
            stratified: false,
            ..SplitSpec::default()
        };
        let (tr, va) = split(&xs, &spec).unwrap();
        assert_eq!((tr.len(), va.len()), (90, 10));
        assert_eq!(split(&xs, &spec).unwrap(), (tr, va));
    }

    #[test]
    fn stratified_seventy_thirty() {
        let mut xs: Vec<TextExample> = (0..70).map(|i| ex(IntentLabel7::Statement, i)).collect();
        xs.extend((0..30).map(|i| ex(IntentLabel7::Question, 100 + i)));
        let (tr, va) = split(&xs, &SplitSpec::default()).unwrap();
        assert_eq!(class_counts(&tr, 7)[1..3], [63, 27]);
        assert_eq!(class_counts(&va, 7)[1..3], [7, 3]);
    }

    #[test]
    fn singleton_class_stays_in_train() {
        let mut xs: Vec<TextExample> = (0..20).map(|i| ex(IntentLabel7::Statement, i)).collect();
        xs.push(ex(IntentLabel7::RhetoricalC, 99));
        let (tr, _) = split(&xs, &SplitSpec::default()).unwrap();
        assert_eq!(class_counts(&tr, 7)[5], 1);
    }

    #[test]
    fn class_weight_examples() {
        assert_eq!(class_weights(&[10, 40]).unwrap(), vec![2.5, 0.625]);
        assert_eq!(class_weights(&[7, 7, 7]).unwrap(), vec![1.0; 3]);
        assert!(class_weights(&[3, 0]).is_err());
    }

    #[test]
    fn kappa_unanimous_is_one() {
        assert_eq!(fleiss_kappa(&[vec![2, 0], vec![0, 2]]).unwrap(), 1.0);
        assert_eq!(fleiss_kappa(&[vec![0, 3, 0], vec![3, 0, 0], vec![0, 0, 3]]).unwrap(), 1.0);
        // everything in one category: degenerate but perfect
        assert_eq!(fleiss_kappa(&[vec![3, 0], vec![3, 0]]).unwrap(), 1.0);
    }

    #[test]
    fn kappa_rejects_uneven_rows() {
        assert!(fleiss_kappa(&[vec![2, 1], vec![1, 1]]).is_err());
        assert!(fleiss_kappa(&[vec![1, 0]]).is_err());
    }

    /// Fleiss' classic worked example (10 items, 14 raters, 5 categories): kappa = 0.210.
    #[test]
    fn kappa_reference_table() {
        let t = vec![
            vec![0, 0, 0, 0, 14],
            vec![0, 2, 6, 4, 2],
            vec![0, 0, 3, 5, 6],
            vec![0, 3, 9, 2, 0],
            vec![2, 2, 8, 1, 1],
            vec![7, 7, 0, 0, 0],
            vec![3, 2, 6, 3, 0],
            vec![2, 5, 3, 2, 2],
            vec![6, 5, 2, 1, 0],
            vec![0, 2, 2, 3, 7],
        ];
        assert!((fleiss_kappa(&t).unwrap() - 0.210).abs() < 5e-4);
    }

    #[test]
    fn majority_votes() {
        use IntentLabel7::*;
        assert_eq!(majority_vote(&[Question, Question, Statement]), Vote::Decided(Question));
        assert_eq!(majority_vote(&[Question, Statement, Command]), Vote::Unresolved);
        assert_eq!(majority_vote(&[Command]), Vote::Decided(Command));
    }

    proptest! {
        #[test]
        fn weights_favour_small_classes(counts in proptest::collection::vec(1usize..500, 2..8)) {
            let w = class_weights(&counts).unwrap();
            let total: usize = counts.iter().sum();
            let mean: f64 = w.iter().zip(&counts).map(|(w, &c)| w * c as f64).sum::<f64>() / total as f64;
            prop_assert!((mean - 1.0).abs() < 1e-12);
            for i in 0..counts.len() {
                prop_assert!(w[i] > 0.0);
                for j in 0..counts.len() {
                    if counts[i] > counts[j] {
                        prop_assert!(w[i] < w[j]);
                    }
                }
            }
        }

        #[test]
        fn tsv_round_trip(items in proptest::collection::vec((0usize..7, "[가-힣]{1,5}( [가-힣]{1,5}){0,3}"), 0..20)) {
            let xs: Vec<TextExample> = items
                .into_iter()
                .map(|(c, text)| TextExample { text, label: IntentLabel7::ALL[c] })
                .collect();
            let mut buf = Vec::new();
            write_text_corpus(&mut buf, &xs).unwrap();
            prop_assert_eq!(parse_text_corpus(&buf[..]).unwrap(), xs);
        }

        #[test]
        fn kappa_at_most_one(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let table: Vec<Vec<usize>> = (0..12)
                .map(|_| {
                    let mut row = vec![0; 4];
                    for _ in 0..3 {
                        row[rng.gen_range(0..4)] += 1;
                    }
                    row
                })
                .collect();
            if let Ok(k) = fleiss_kappa(&table) {
                let unanimous = table.iter().all(|r| r.contains(&3));
                prop_assert!(k <= 1.0 + 1e-12);
                prop_assert_eq!(unanimous, (k - 1.0).abs() < 1e-12);
            }
        }
    }
}
