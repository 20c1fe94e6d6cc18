use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{extract_events, EventKind, EventType, MAX_REPETITION};
use crate::annotation::{is_filler_word, Token, TokenKind};
use crate::corpus::ParallelPair;

/// Version of the serialized model document.
pub const MODEL_VERSION: u32 = 1;

const SUM_TOLERANCE: f64 = 1e-9;

/// Where a boundary sits in its utterance: boundary 0 is `Start`, the rest
/// split into thirds of `b / n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionBucket {
    Start,
    Early,
    Mid,
    Late,
}

impl PositionBucket {
    pub const ALL: [PositionBucket; 4] = [
        PositionBucket::Start,
        PositionBucket::Early,
        PositionBucket::Mid,
        PositionBucket::Late,
    ];

    pub fn of(boundary: usize, n: usize) -> Self {
        if boundary == 0 {
            PositionBucket::Start
        } else if 3 * boundary < n {
            PositionBucket::Early
        } else if 3 * boundary < 2 * n {
            PositionBucket::Mid
        } else {
            PositionBucket::Late
        }
    }
}

/// Class of the fluent token just before a boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrevClass {
    None,
    Word,
    Filler,
    Pause,
}

impl PrevClass {
    pub const ALL: [PrevClass; 4] = [
        PrevClass::None,
        PrevClass::Word,
        PrevClass::Filler,
        PrevClass::Pause,
    ];

    pub fn of(fluent: &[Token], boundary: usize) -> Self {
        match boundary.checked_sub(1).map(|i| &fluent[i]) {
            None => PrevClass::None,
            Some(t) if t.kind == TokenKind::SilentPause => PrevClass::Pause,
            Some(t) if t.kind == TokenKind::FilledPause || is_filler_word(&t.text) => {
                PrevClass::Filler
            }
            Some(_) => PrevClass::Word,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoundaryContext {
    pub position: PositionBucket,
    pub previous: PrevClass,
}

impl BoundaryContext {
    pub fn of(fluent: &[Token], boundary: usize) -> Self {
        BoundaryContext {
            position: PositionBucket::of(boundary, fluent.len()),
            previous: PrevClass::of(fluent, boundary),
        }
    }
}

/// Learned insertion statistics. Immutable once trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InsertionModel {
    pub version: u32,
    /// Probability that a boundary carries at least one event.
    pub boundary_prob: BTreeMap<PositionBucket, BTreeMap<PrevClass, f64>>,
    pub type_dist: BTreeMap<EventType, f64>,
    pub filler_lexicon: BTreeMap<String, f64>,
    pub repetition_len_dist: BTreeMap<usize, f64>,
    pub trained_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrainError {
    #[error("no training pairs with fluent tokens")]
    EmptyTrainingSet,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed model document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model version {found:?} is not supported (expected {expected})")]
    VersionMismatch { found: Option<u64>, expected: u32 },
    #[error("invalid model: {0}")]
    Invalid(String),
}

fn normalize<K: Ord + Clone>(counts: &BTreeMap<K, usize>) -> BTreeMap<K, f64> {
    let total: usize = counts.values().sum();
    counts
        .iter()
        .map(|(k, &c)| (k.clone(), c as f64 / total as f64))
        .collect()
}

/// Estimates an [`InsertionModel`] from parallel pairs.
///
/// Boundary probabilities are add-one smoothed per context:
/// `(boundaries with an event + 1) / (boundaries + 2)`. The event-type,
/// filler and repetition-length tables are plain relative frequencies;
/// when the corpus has no events of a kind the corresponding table falls
/// back to a fixed default (uniform types, `uh`/`um`, length 1).
pub fn train_model(pairs: &[ParallelPair]) -> Result<InsertionModel, TrainError> {
    let pairs: Vec<&ParallelPair> = pairs.iter().filter(|p| !p.fluent.is_empty()).collect();
    if pairs.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let mut seen: BTreeMap<BoundaryContext, (usize, usize)> = BTreeMap::new();
    let mut types: BTreeMap<EventType, usize> = BTreeMap::new();
    let mut fillers: BTreeMap<String, usize> = BTreeMap::new();
    let mut lengths: BTreeMap<usize, usize> = BTreeMap::new();
    let mut span_tokens = 0;
    let mut all_tokens = 0;

    for pair in &pairs {
        let n = pair.fluent.len();
        let events = extract_events(pair);
        let mut has_event = vec![false; n + 1];
        for e in &events {
            has_event[e.anchor] = true;
            *types.entry(e.kind.event_type()).or_default() += 1;
            match &e.kind {
                EventKind::Filler { token } => *fillers.entry(token.clone()).or_default() += 1,
                EventKind::Repetition { len } => {
                    *lengths.entry((*len).min(MAX_REPETITION)).or_default() += 1
                }
                _ => {}
            }
        }
        for (b, &hit) in has_event.iter().enumerate() {
            let entry = seen
                .entry(BoundaryContext::of(&pair.fluent, b))
                .or_default();
            entry.0 += usize::from(hit);
            entry.1 += 1;
        }
        span_tokens += pair.disfluent.disfluent_token_count();
        all_tokens += pair.disfluent.len();
    }

    let boundary_prob = PositionBucket::ALL
        .into_iter()
        .map(|position| {
            let row = PrevClass::ALL
                .into_iter()
                .map(|previous| {
                    let (hits, total) = seen
                        .get(&BoundaryContext { position, previous })
                        .copied()
                        .unwrap_or_default();
                    (previous, (hits + 1) as f64 / (total + 2) as f64)
                })
                .collect();
            (position, row)
        })
        .collect();

    let type_dist = if types.is_empty() {
        EventType::ALL
            .into_iter()
            .map(|t| (t, 1.0 / EventType::ALL.len() as f64))
            .collect()
    } else {
        normalize(&types)
    };
    let filler_lexicon = if fillers.is_empty() {
        BTreeMap::from([("uh".to_string(), 0.5), ("um".to_string(), 0.5)])
    } else {
        normalize(&fillers)
    };
    let repetition_len_dist = if lengths.is_empty() {
        BTreeMap::from([(1, 1.0)])
    } else {
        normalize(&lengths)
    };

    Ok(InsertionModel {
        version: MODEL_VERSION,
        boundary_prob,
        type_dist,
        filler_lexicon,
        repetition_len_dist,
        trained_rate: span_tokens as f64 / all_tokens as f64,
    })
}

impl InsertionModel {
    pub fn boundary_probability(&self, ctx: BoundaryContext) -> f64 {
        self.boundary_prob
            .get(&ctx.position)
            .and_then(|row| row.get(&ctx.previous))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn type_probability(&self, t: EventType) -> f64 {
        self.type_dist.get(&t).copied().unwrap_or(0.0)
    }

    /// Checks ranges and that every distribution sums to one.
    pub fn validate(&self) -> Result<(), ModelError> {
        let invalid = |m: String| Err(ModelError::Invalid(m));
        let in_unit = |p: f64| (0.0..=1.0).contains(&p);
        for (pos, row) in &self.boundary_prob {
            for (prev, &p) in row {
                if !in_unit(p) {
                    return invalid(format!("boundary_prob[{pos:?}][{prev:?}] = {p}"));
                }
            }
        }
        check_dist("type_dist", self.type_dist.values())?;
        check_dist("filler_lexicon", self.filler_lexicon.values())?;
        check_dist("repetition_len_dist", self.repetition_len_dist.values())?;
        if let Some(k) = self
            .repetition_len_dist
            .keys()
            .find(|&&k| k == 0 || k > MAX_REPETITION)
        {
            return invalid(format!(
                "repetition length {k} outside 1..={MAX_REPETITION}"
            ));
        }
        if let Some(f) = self
            .filler_lexicon
            .keys()
            .find(|f| f.is_empty() || f.chars().any(char::is_whitespace))
        {
            return invalid(format!("filler {f:?} is not a single token"));
        }
        if !in_unit(self.trained_rate) {
            return invalid(format!("trained_rate = {}", self.trained_rate));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("models always serialize")
    }

    /// Parses a model document, refusing other versions before anything else.
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("version").and_then(serde_json::Value::as_u64);
        if found != Some(MODEL_VERSION as u64) {
            return Err(ModelError::VersionMismatch {
                found,
                expected: MODEL_VERSION,
            });
        }
        let model: InsertionModel = serde_json::from_value(value)?;
        model.validate()?;
        Ok(model)
    }
}

fn check_dist<'a>(name: &str, values: impl Iterator<Item = &'a f64>) -> Result<(), ModelError> {
    let mut sum = 0.0;
    for &p in values {
        if !(0.0..=1.0).contains(&p) {
            return Err(ModelError::Invalid(format!("{name} has probability {p}")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(ModelError::Invalid(format!("{name} sums to {sum}")));
    }
    Ok(())
}
