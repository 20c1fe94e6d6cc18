//! Corpus loading, fluent/disfluent pair construction, corpus statistics and
//! reproducible train/test splits.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{
    disfluency_rate, infer_kind, parse_annotated, read_bio, strip_disfluencies, token_texts,
    AnnotatedUtterance, DisfluencySpan, Token,
};
use crate::inserter::{align_pair, Alignment};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// One markup utterance per line.
    Markup,
    /// `token<TAB>tag` rows, blank line between utterances.
    Bio,
    /// One [`PairRecord`] per line.
    Jsonl,
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markup" => Ok(CorpusFormat::Markup),
            "bio" => Ok(CorpusFormat::Bio),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            other => Err(format!("unknown corpus format {other:?}")),
        }
    }
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusFormat::Markup => "markup",
            CorpusFormat::Bio => "bio",
            CorpusFormat::Jsonl => "jsonl",
        })
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("corpus has no usable pairs")]
    EmptyCorpus,
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
}

/// One line of the JSONL pair format. Field order is part of the contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub fluent: Vec<String>,
    pub disfluent: Vec<String>,
    pub spans: Vec<DisfluencySpan>,
}

impl PairRecord {
    pub fn from_utterance(u: &AnnotatedUtterance) -> Self {
        PairRecord {
            fluent: token_texts(&strip_disfluencies(u)),
            disfluent: u.texts(),
            spans: u.spans().to_vec(),
        }
    }

    /// Rebuilds the utterance; token kinds follow from the enclosing spans.
    pub fn to_utterance(&self) -> Result<AnnotatedUtterance, String> {
        let mut tokens = Vec::with_capacity(self.disfluent.len());
        for (i, text) in self.disfluent.iter().enumerate() {
            let enclosing = self
                .spans
                .iter()
                .filter(|s| s.contains_index(i))
                .map(|s| s.kind);
            let token = Token::new(text.clone(), infer_kind(text, enclosing))
                .map_err(|e| format!("token {i}: {e}"))?;
            tokens.push(token);
        }
        let u = AnnotatedUtterance::new(tokens, self.spans.clone()).map_err(|e| e.to_string())?;
        let stripped = token_texts(&strip_disfluencies(&u));
        if stripped != self.fluent {
            return Err(format!(
                "fluent side {:?} does not match stripped disfluent side {:?}",
                self.fluent, stripped
            ));
        }
        Ok(u)
    }
}

/// Compact single-line JSON for one utterance, without the trailing newline.
pub fn jsonl_line(u: &AnnotatedUtterance) -> String {
    serde_json::to_string(&PairRecord::from_utterance(u)).expect("pair records always serialize")
}

pub fn load_corpus(
    path: &Path,
    format: CorpusFormat,
) -> Result<Vec<AnnotatedUtterance>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_corpus(&text, format)
}

/// Parses corpus text; records are counted from the non-empty lines.
pub fn read_corpus(
    text: &str,
    format: CorpusFormat,
) -> Result<Vec<AnnotatedUtterance>, CorpusError> {
    match format {
        CorpusFormat::Bio => read_bio(text).map_err(|e| CorpusError::Format {
            line: e.line,
            message: e.error.to_string(),
        }),
        CorpusFormat::Markup => lines(text)
            .map(|(line, l)| {
                parse_annotated(l).map_err(|e| CorpusError::Format {
                    line,
                    message: e.to_string(),
                })
            })
            .collect(),
        CorpusFormat::Jsonl => lines(text)
            .map(|(line, l)| {
                let format_err = |message: String| CorpusError::Format { line, message };
                let record: PairRecord =
                    serde_json::from_str(l).map_err(|e| format_err(e.to_string()))?;
                record.to_utterance().map_err(format_err)
            })
            .collect(),
    }
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// A disfluent utterance, its fluent counterpart and their alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelPair {
    pub fluent: Vec<Token>,
    pub disfluent: AnnotatedUtterance,
    pub alignment: Alignment,
}

impl ParallelPair {
    pub fn from_disfluent(disfluent: AnnotatedUtterance) -> Option<Self> {
        let fluent = strip_disfluencies(&disfluent);
        if fluent.is_empty() {
            return None;
        }
        let alignment = align_pair(&fluent, disfluent.tokens())
            .expect("a stripped utterance is a subsequence of its source");
        Some(ParallelPair {
            fluent,
            disfluent,
            alignment,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct PairSet {
    pub pairs: Vec<ParallelPair>,
    /// Utterances whose fluent side is empty, e.g. `{F uh} <sil>`.
    pub dropped_empty: usize,
}

/// Builds one pair per utterance, dropping those that strip to nothing.
pub fn build_pairs(corpus: &[AnnotatedUtterance]) -> PairSet {
    let built: Vec<Option<ParallelPair>> = corpus
        .par_iter()
        .map(|u| ParallelPair::from_disfluent(u.clone()))
        .collect();
    let mut set = PairSet::default();
    for pair in built {
        match pair {
            Some(p) => set.pairs.push(p),
            None => set.dropped_empty += 1,
        }
    }
    if set.dropped_empty > 0 {
        log::warn!(
            "dropped {} utterances with an empty fluent side",
            set.dropped_empty
        );
    }
    set
}

/// Corpus statistics in the shape of a train/test summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_sentences: usize,
    pub avg_tokens_fluent: f64,
    pub avg_tokens_disfluent: f64,
    pub total_fluent_tokens: usize,
    pub total_disfluent_tokens: usize,
    /// Disfluent-span tokens over all disfluent-side tokens.
    pub rate_micro: f64,
    /// Mean of the per-utterance rates.
    pub rate_macro: f64,
}

pub fn compute_stats(pairs: &[ParallelPair]) -> Result<CorpusStats, CorpusError> {
    if pairs.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let n = pairs.len();
    let total_fluent: usize = pairs.iter().map(|p| p.fluent.len()).sum();
    let total_disfluent: usize = pairs.iter().map(|p| p.disfluent.len()).sum();
    let span_tokens: usize = pairs
        .iter()
        .map(|p| p.disfluent.disfluent_token_count())
        .sum();
    let rate_sum: f64 = pairs
        .iter()
        .map(|p| disfluency_rate(&p.disfluent).expect("pairs are non-empty"))
        .sum();
    Ok(CorpusStats {
        n_sentences: n,
        avg_tokens_fluent: total_fluent as f64 / n as f64,
        avg_tokens_disfluent: total_disfluent as f64 / n as f64,
        total_fluent_tokens: total_fluent,
        total_disfluent_tokens: total_disfluent,
        rate_micro: span_tokens as f64 / total_disfluent as f64,
        rate_macro: rate_sum / n as f64,
    })
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<42}{:>12}", "No. sentences", self.n_sentences)?;
        writeln!(
            f,
            "{:<42}{:>12.2}",
            "Avg no. of tokens in fluent utterance", self.avg_tokens_fluent
        )?;
        writeln!(
            f,
            "{:<42}{:>12.2}",
            "Avg no. of tokens in disfluent utterance", self.avg_tokens_disfluent
        )?;
        writeln!(
            f,
            "{:<42}{:>12}",
            "Total no. fluent tokens", self.total_fluent_tokens
        )?;
        writeln!(
            f,
            "{:<42}{:>12}",
            "Total no. disfluent tokens", self.total_disfluent_tokens
        )?;
        writeln!(
            f,
            "{:<42}{:>11.1}%",
            "Rate of disfluency, micro (%)",
            self.rate_micro * 100.0
        )?;
        writeln!(
            f,
            "{:<42}{:>11.1}%",
            "Rate of disfluency, macro (%)",
            self.rate_macro * 100.0
        )
    }
}

/// Seeded shuffle split; each side keeps the input order.
/// `|test| = round(n * test_fraction)`.
pub fn split_corpus<T: Clone>(
    corpus: &[T],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), CorpusError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CorpusError::BadFraction(test_fraction));
    }
    let n = corpus.len();
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_test = vec![false; n];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    let (test, train): (Vec<_>, Vec<_>) =
        corpus.iter().cloned().zip(is_test).partition(|(_, t)| *t);
    Ok((
        train.into_iter().map(|(x, _)| x).collect(),
        test.into_iter().map(|(x, _)| x).collect(),
    ))
}
