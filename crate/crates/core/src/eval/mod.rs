//! Output evaluation: corpus BLEU, embedding similarity, disfluency-rate
//! comparison and the two-sample t-test.

mod bleu;
mod similarity;
mod ttest;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::AnnotatedUtterance;

pub use bleu::{corpus_bleu, DEFAULT_MAX_N};
pub use similarity::{bert_score_from_embeddings, corpus_bert_score, read_embeddings, BertScore};
/// One embedding per token of an utterance.
pub type TokenEmbeddings = Vec<Vec<f64>>;

pub use ttest::{two_sample_ttest, two_sample_ttest_with, two_sided_p, TestMethod, TestResult};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("input is empty")]
    EmptyInput,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("vector of dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vector {index} has norm {norm}, expected 1")]
    NonUnitVector { index: usize, norm: f64 },
    #[error("each sample needs at least two values")]
    TooFewSamples,
    #[error("samples have zero variance")]
    ZeroVariance,
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("{0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub rate_generated: f64,
    pub rate_reference: f64,
    pub rate_delta: f64,
}

/// Micro disfluency rate of `generated` and its difference from
/// `reference_rate`.
pub fn rate_report(
    generated: &[AnnotatedUtterance],
    reference_rate: f64,
) -> Result<RateReport, EvalError> {
    let rate_generated = micro_rate(generated)?;
    Ok(RateReport {
        rate_generated,
        rate_reference: reference_rate,
        rate_delta: rate_generated - reference_rate,
    })
}

/// Disfluent tokens over all tokens, summed across utterances.
pub fn micro_rate(utterances: &[AnnotatedUtterance]) -> Result<f64, EvalError> {
    let total: usize = utterances.iter().map(AnnotatedUtterance::len).sum();
    if total == 0 {
        return Err(EvalError::EmptyInput);
    }
    let disfluent: usize = utterances
        .iter()
        .map(AnnotatedUtterance::disfluent_token_count)
        .sum();
    Ok(disfluent as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bert_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bert_r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bert_f1: Option<f64>,
    pub rate_generated: f64,
    pub rate_reference: f64,
    pub rate_delta: f64,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }
}

/// Scores `generated` against `references` utterance by utterance.
///
/// BLEU compares the surface token sequences. The reference rate is the
/// micro rate of `references` unless `reference_rate` is given. Embedding
/// scores are included when `embeddings` holds hypothesis and reference
/// blocks, one per utterance.
pub fn evaluate(
    generated: &[AnnotatedUtterance],
    references: &[AnnotatedUtterance],
    embeddings: Option<(&[TokenEmbeddings], &[TokenEmbeddings])>,
    reference_rate: Option<f64>,
) -> Result<EvalReport, EvalError> {
    let hyps: Vec<Vec<String>> = generated.iter().map(AnnotatedUtterance::texts).collect();
    let refs: Vec<Vec<String>> = references.iter().map(AnnotatedUtterance::texts).collect();
    let bleu = corpus_bleu(&hyps, &refs, DEFAULT_MAX_N)?;
    let bert = embeddings
        .map(|(h, r)| {
            if h.len() != generated.len() {
                return Err(EvalError::LengthMismatch {
                    left: generated.len(),
                    right: h.len(),
                });
            }
            corpus_bert_score(h, r)
        })
        .transpose()?;
    let reference_rate = match reference_rate {
        Some(r) => r,
        None => micro_rate(references)?,
    };
    let rates = rate_report(generated, reference_rate)?;
    Ok(EvalReport {
        bleu,
        bert_p: bert.map(|b| b.precision),
        bert_r: bert.map(|b| b.recall),
        bert_f1: bert.map(|b| b.f1),
        rate_generated: rates.rate_generated,
        rate_reference: rates.rate_reference,
        rate_delta: rates.rate_delta,
    })
}
