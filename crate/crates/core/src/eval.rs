//! Confusion matrices, accuracy / macro-F1 reports, and a wall-clock
//! inference harness.

use std::fmt::Write as _;
use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `counts[p][a]`: rows are predictions, columns are answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub label_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class_recall: Vec<f64>,
    pub per_class_precision: Vec<f64>,
    pub total: u64,
}

impl ConfusionMatrix {
    /// Wraps an existing count table; `names` may be empty for numeric labels.
    pub fn from_counts(counts: Vec<Vec<u64>>, names: Vec<String>) -> Result<Self> {
        let k = counts.len();
        if counts.iter().any(|r| r.len() != k) {
            return Err(Error::invalid("confusion matrix must be square"));
        }
        let label_names = if names.is_empty() {
            (0..k).map(|i| i.to_string()).collect()
        } else if names.len() == k {
            names
        } else {
            return Err(Error::invalid(format!("{} label names for {k} classes", names.len())));
        };
        Ok(Self { counts, label_names })
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }

    pub fn with_names<S: AsRef<str>>(mut self, names: &[S]) -> Result<Self> {
        if names.len() != self.k() {
            return Err(Error::invalid(format!("{} label names for {} classes", names.len(), self.k())));
        }
        self.label_names = names.iter().map(|s| s.as_ref().to_string()).collect();
        Ok(self)
    }

    pub fn transposed(&self) -> Self {
        let k = self.k();
        let counts = (0..k).map(|p| (0..k).map(|a| self.counts[a][p]).collect()).collect();
        Self {
            counts,
            label_names: self.label_names.clone(),
        }
    }

    /// Aligned text table with a `Pred \ Ans` corner.
    pub fn to_table(&self) -> String {
        let corner = "Pred \\ Ans";
        let w = self
            .counts
            .iter()
            .flatten()
            .map(|c| c.to_string().len())
            .chain(self.label_names.iter().map(|n| n.chars().count()))
            .max()
            .unwrap_or(1);
        let lead = self
            .label_names
            .iter()
            .map(|n| n.chars().count())
            .chain([corner.len()])
            .max()
            .unwrap_or(0);
        let mut s = format!("{corner:<lead$}");
        for n in &self.label_names {
            let _ = write!(s, " {n:>w$}");
        }
        s.push('\n');
        for (n, row) in self.label_names.iter().zip(&self.counts) {
            let _ = write!(s, "{n:<lead$}");
            for c in row {
                let _ = write!(s, " {c:>w$}");
            }
            s.push('\n');
        }
        s
    }
}

pub fn confusion(preds: &[usize], answers: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if preds.len() != answers.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} answers",
            preds.len(),
            answers.len()
        )));
    }
    let mut counts = vec![vec![0u64; k]; k];
    for (&p, &a) in preds.iter().zip(answers) {
        if p >= k || a >= k {
            return Err(Error::invalid(format!("label pair ({p}, {a}) outside 0..{k}")));
        }
        counts[p][a] += 1;
    }
    ConfusionMatrix::from_counts(counts, Vec::new())
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricReport> {
    let k = cm.k();
    let total = cm.total();
    if k == 0 || total == 0 {
        return Err(Error::invalid("empty confusion matrix"));
    }
    let row_sum: Vec<u64> = cm.counts.iter().map(|r| r.iter().sum()).collect();
    let col_sum: Vec<u64> = (0..k).map(|a| cm.counts.iter().map(|r| r[a]).sum()).collect();
    let diag: Vec<u64> = (0..k).map(|i| cm.counts[i][i]).collect();
    let recall: Vec<f64> = (0..k).map(|i| ratio(diag[i], col_sum[i])).collect();
    let precision: Vec<f64> = (0..k).map(|i| ratio(diag[i], row_sum[i])).collect();

    let mut f1_sum = 0.0;
    let mut counted = 0usize;
    for i in 0..k {
        if col_sum[i] == 0 {
            warn!("class {} never appears among the answers; excluded from macro F1", cm.label_names[i]);
            continue;
        }
        if row_sum[i] == 0 {
            warn!("class {} is never predicted; its precision is taken as 0", cm.label_names[i]);
        }
        let (p, r) = (precision[i], recall[i]);
        f1_sum += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        counted += 1;
    }
    Ok(MetricReport {
        accuracy: cm.trace() as f64 / total as f64,
        macro_f1: f1_sum / counted as f64,
        per_class_recall: recall,
        per_class_precision: precision,
        total,
    })
}

impl MetricReport {
    pub fn to_table(&self, names: &[String]) -> String {
        let lead = names.iter().map(|n| n.chars().count()).chain([5]).max().unwrap_or(5);
        let mut s = format!("{:<lead$} {:>9} {:>9}\n", "class", "recall", "precision");
        for (i, n) in names.iter().enumerate() {
            let _ = writeln!(
                s,
                "{n:<lead$} {:>9.4} {:>9.4}",
                self.per_class_recall[i], self.per_class_precision[i]
            );
        }
        let _ = writeln!(s, "accuracy {:.4}  macro-F1 {:.4}  (n = {})", self.accuracy, self.macro_f1, self.total);
        s
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimedRun {
    pub wall_ns: u64,
    pub predictions: Vec<usize>,
    pub confusion: ConfusionMatrix,
    pub report: MetricReport,
}

/// Runs `runner` once untimed, then `runs` timed passes over the same inputs.
pub fn timed_inference<F>(mut runner: F, answers: &[usize], k: usize, runs: usize) -> Result<Vec<TimedRun>>
where
    F: FnMut() -> Result<Vec<usize>>,
{
    runner()?;
    (0..runs)
        .map(|_| {
            let start = Instant::now();
            let predictions = runner()?;
            let wall_ns = start.elapsed().as_nanos() as u64;
            let confusion = confusion(&predictions, answers, k)?;
            let report = metrics(&confusion)?;
            Ok(TimedRun {
                wall_ns,
                predictions,
                confusion,
                report,
            })
        })
        .collect()
}
