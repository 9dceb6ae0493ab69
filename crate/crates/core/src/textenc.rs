//! Character-vector encoding of transcripts.
//!
//! A transcript is split into Unicode scalar values (spaces included) and
//! the last `max_chars` characters are mapped to their vectors. Shorter
//! transcripts are left-padded with zero rows so the sentence-final
//! character always sits on the bottom row.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_DIM: usize = 100;
pub const DEFAULT_MAX_CHARS: usize = 50;
pub const SPACE: char = ' ';

#[derive(Debug, Clone, PartialEq)]
pub struct CharVocab {
    entries: HashMap<char, Vec<f64>>,
    dim: usize,
}

impl CharVocab {
    /// Empty vocabulary holding only the (zero) space vector.
    pub fn new(dim: usize) -> Self {
        let mut entries = HashMap::new();
        entries.insert(SPACE, vec![0.0; dim]);
        Self { entries, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, c: char) -> Option<&[f64]> {
        self.entries.get(&c).map(Vec::as_slice)
    }

    pub fn contains(&self, c: char) -> bool {
        self.entries.contains_key(&c)
    }

    /// Returns the previous vector for `c`, if any.
    pub fn insert(&mut self, c: char, v: Vec<f64>) -> Result<Option<Vec<f64>>> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                line: 0,
                expected: self.dim,
                found: v.len(),
            });
        }
        Ok(self.entries.insert(c, v))
    }

    /// Characters in a stable order.
    pub fn chars(&self) -> Vec<char> {
        let mut cs: Vec<char> = self.entries.keys().copied().collect();
        cs.sort_unstable();
        cs
    }
}

/// Tail-windowed character matrix; real characters occupy the bottom
/// `valid_chars` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CharSequenceFeature {
    pub matrix: Matrix,
    pub valid_chars: usize,
}

/// Vectors for characters missing from the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OovPolicy {
    #[default]
    Zero,
}

/// Reads the whitespace-separated text layout `token v1 .. vN`, one entry per
/// line. An optional `count dim` header line is skipped. Tokens must be a
/// single character; the literal token `<space>` (or `▁`) names the space
/// character. The dimension is fixed by the first entry unless `dim` is given.
pub fn load_char_vectors(path: impl AsRef<Path>, dim: Option<usize>) -> Result<CharVocab> {
    let file = std::fs::File::open(path)?;
    parse_char_vectors(std::io::BufReader::new(file), dim)
}

pub fn parse_char_vectors<R: BufRead>(input: R, dim: Option<usize>) -> Result<CharVocab> {
    let mut dim = dim;
    let mut parsed: Vec<(char, Vec<f64>)> = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if line_no == 1 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok())
        {
            continue;
        }
        let token = fields[0];
        let ch = match token {
            "<space>" | "▁" => SPACE,
            t => {
                let mut it = t.chars();
                match (it.next(), it.next()) {
                    (Some(c), None) => c,
                    _ => {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: format!("token `{t}` is not a single character"),
                        })
                    }
                }
            }
        };
        let values = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line: line_no,
                        msg: format!("`{f}` is not a finite number"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        let expected = *dim.get_or_insert(values.len());
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                line: line_no,
                expected,
                found: values.len(),
            });
        }
        parsed.push((ch, values));
    }

    let mut vocab = CharVocab::new(dim.unwrap_or(DEFAULT_DIM));
    let mut seen = std::collections::HashSet::new();
    for (ch, v) in parsed {
        if !seen.insert(ch) {
            warn!("duplicate character vector for {ch:?}; keeping the last one");
        }
        vocab.entries.insert(ch, v);
    }
    Ok(vocab)
}

/// Writes `count dim` followed by one `char v1 .. vd` line per entry; the
/// space character is written as `<space>`. Values round-trip exactly.
pub fn write_char_vectors<W: std::io::Write>(mut out: W, vocab: &CharVocab) -> Result<()> {
    writeln!(out, "{} {}", vocab.len(), vocab.dim())?;
    for c in vocab.chars() {
        let v = vocab.get(c).expect("listed character");
        if c == SPACE {
            write!(out, "<space>")?;
        } else {
            write!(out, "{c}")?;
        }
        for x in v {
            write!(out, " {x}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Characters of `text` as encoded: Unicode scalar values, spaces kept.
pub fn segment(text: &str) -> Vec<char> {
    text.chars().collect()
}

pub fn encode(text: &str, vocab: &CharVocab, max_chars: usize) -> Result<CharSequenceFeature> {
    encode_with(text, vocab, max_chars, OovPolicy::Zero)
}

pub fn encode_with(
    text: &str,
    vocab: &CharVocab,
    max_chars: usize,
    oov: OovPolicy,
) -> Result<CharSequenceFeature> {
    if text.trim().is_empty() {
        return Err(Error::invalid("transcript is empty"));
    }
    if max_chars == 0 {
        return Err(Error::InvalidConfig("max_chars must be positive".into()));
    }
    let chars = segment(text);
    let tail = &chars[chars.len().saturating_sub(max_chars)..];
    let pad = max_chars - tail.len();
    let mut m = Matrix::zeros(max_chars, vocab.dim());
    for (i, &c) in tail.iter().enumerate() {
        match (vocab.get(c), oov) {
            (Some(v), _) => m.row_mut(pad + i).copy_from_slice(v),
            (None, OovPolicy::Zero) => {}
        }
    }
    Ok(CharSequenceFeature {
        matrix: m,
        valid_chars: tail.len(),
    })
}
