use serde::{Deserialize, Serialize};

use super::EvalError;

const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BertScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl BertScore {
    fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        BertScore {
            precision,
            recall,
            f1,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check(vectors: &[Vec<f64>], dim: usize) -> Result<(), EvalError> {
    for (index, v) in vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(EvalError::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
        let norm = dot(v, v).sqrt();
        if (norm - 1.0).abs().is_nan() || (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(EvalError::NonUnitVector { index, norm });
        }
    }
    Ok(())
}

fn greedy_mean(from: &[Vec<f64>], to: &[Vec<f64>]) -> f64 {
    let total: f64 = from
        .iter()
        .map(|a| {
            to.iter()
                .map(|b| dot(a, b))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    total / from.len() as f64
}

/// Greedy-matching similarity between one hypothesis and one reference,
/// given per-token unit embeddings.
pub fn bert_score_from_embeddings(
    hyp_embs: &[Vec<f64>],
    ref_embs: &[Vec<f64>],
) -> Result<BertScore, EvalError> {
    let Some(first) = hyp_embs.first().or(ref_embs.first()) else {
        return Err(EvalError::EmptyInput);
    };
    if hyp_embs.is_empty() || ref_embs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let dim = first.len();
    check(hyp_embs, dim)?;
    check(ref_embs, dim)?;
    Ok(BertScore::from_pr(
        greedy_mean(hyp_embs, ref_embs),
        greedy_mean(ref_embs, hyp_embs),
    ))
}

/// Mean precision and recall over sentence pairs; F1 is the harmonic mean
/// of those two means.
pub fn corpus_bert_score(
    hypotheses: &[Vec<Vec<f64>>],
    references: &[Vec<Vec<f64>>],
) -> Result<BertScore, EvalError> {
    if hypotheses.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            left: hypotheses.len(),
            right: references.len(),
        });
    }
    if hypotheses.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut p = 0.0;
    let mut r = 0.0;
    for (h, rf) in hypotheses.iter().zip(references) {
        let s = bert_score_from_embeddings(h, rf)?;
        p += s.precision;
        r += s.recall;
    }
    let n = hypotheses.len() as f64;
    Ok(BertScore::from_pr(p / n, r / n))
}

/// Reads embedding blocks: one vector per line as space-separated decimals,
/// sentences separated by blank lines.
pub fn read_embeddings(text: &str) -> Result<Vec<Vec<Vec<f64>>>, EvalError> {
    let mut blocks = Vec::new();
    let mut current: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                blocks.push(std::mem::take(&mut current));
            }
            continue;
        }
        let v = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| EvalError::Format {
                line: i + 1,
                message: e.to_string(),
            })?;
        current.push(v);
    }
    if !current.is_empty() {
        blocks.push(current);
    }
    Ok(blocks)
}
