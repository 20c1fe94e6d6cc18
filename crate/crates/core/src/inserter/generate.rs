use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::events::{apply_events, fragment_for, EventError};
use super::model::{BoundaryContext, InsertionModel};
use super::{DisfluencyEvent, EventKind, EventType};
use crate::annotation::{is_filler_word, AnnotatedUtterance, Token};

/// Highest accepted `target_rate`.
pub const MAX_TARGET_RATE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub seed: u64,
    pub target_rate: f64,
    pub max_events_per_utterance: usize,
    pub allow_kinds: BTreeSet<EventType>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            seed: 0,
            target_rate: 0.0,
            max_events_per_utterance: 64,
            allow_kinds: EventType::ALL.into_iter().collect(),
        }
    }
}

impl GenerationConfig {
    pub fn new(seed: u64, target_rate: f64) -> Self {
        GenerationConfig {
            seed,
            target_rate,
            ..GenerationConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), InsertError> {
        if !(0.0..=MAX_TARGET_RATE).contains(&self.target_rate) {
            return Err(InsertError::InvalidConfig(format!(
                "target_rate {} outside [0, {MAX_TARGET_RATE}]",
                self.target_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InsertError {
    #[error("cannot insert into an empty utterance")]
    EmptyInput,
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("target rate {target} is unreachable for this utterance (at most {max:.4})")]
    RateUnreachable { target: f64, max: f64 },
    #[error(transparent)]
    Event(#[from] EventError),
}

/// Per-boundary sampling plan: the feasible kinds with their renormalized
/// weights, and the expected number of tokens an event there inserts.
struct Boundary {
    p: f64,
    kinds: Vec<(EventType, f64)>,
    expected_tokens: f64,
}

fn plan(model: &InsertionModel, fluent: &[Token], allow: &BTreeSet<EventType>) -> Vec<Boundary> {
    let n = fluent.len();
    (0..=n)
        .map(|b| {
            let feasible = |t: EventType| match t {
                EventType::Filler | EventType::SilentPause => true,
                EventType::Repetition => b < n,
                EventType::Substitution => b < n && !is_filler_word(&fluent[b].text),
                EventType::FalseStart => b < n && fragment_for(&fluent[b].text).is_some(),
            };
            let mut kinds: Vec<(EventType, f64)> = EventType::ALL
                .into_iter()
                .filter(|&t| allow.contains(&t) && feasible(t))
                .map(|t| (t, model.type_probability(t)))
                .filter(|&(_, w)| w > 0.0)
                .collect();
            let total: f64 = kinds.iter().map(|(_, w)| w).sum();
            kinds.iter_mut().for_each(|(_, w)| *w /= total);
            let expected_tokens = kinds
                .iter()
                .map(|&(t, w)| {
                    w * match t {
                        EventType::Repetition => model
                            .repetition_len_dist
                            .iter()
                            .map(|(&k, &pk)| pk * k.min(n - b) as f64)
                            .sum(),
                        EventType::Substitution => 2.0,
                        _ => 1.0,
                    }
                })
                .sum();
            let p = if kinds.is_empty() {
                0.0
            } else {
                model.boundary_probability(BoundaryContext::of(fluent, b))
            };
            Boundary {
                p,
                kinds,
                expected_tokens,
            }
        })
        .collect()
}

/// Solves `Σ min(1, s·p_b)·m_b = required` for the scale `s`.
///
/// The left side is piecewise linear and nondecreasing in `s`. With the
/// boundaries sorted by `p` descending, the first `j` saturate and the rest
/// stay linear, so `s = (required - C_j) / S_j` with `C_j` the saturated
/// mass and `S_j` the linear slope; the first `j` whose solution keeps
/// boundary `j` unsaturated is the answer.
fn calibrate(boundaries: &[Boundary], required: f64) -> Option<f64> {
    if required <= 0.0 {
        return Some(0.0);
    }
    let mut terms: Vec<(f64, f64)> = boundaries
        .iter()
        .filter(|b| b.p > 0.0 && b.expected_tokens > 0.0)
        .map(|b| (b.p, b.expected_tokens))
        .collect();
    terms.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut saturated = 0.0;
    let mut slope: f64 = terms.iter().map(|(p, m)| p * m).sum();
    for &(p, m) in &terms {
        let s = (required - saturated) / slope;
        if s * p <= 1.0 + 1e-12 {
            return Some(s);
        }
        saturated += m;
        slope -= p * m;
    }
    None
}

fn pick<T: Copy>(items: impl IntoIterator<Item = (T, f64)>, u: f64) -> Option<T> {
    let mut acc = 0.0;
    let mut last = None;
    for (item, w) in items {
        acc += w;
        last = Some(item);
        if u < acc {
            return last;
        }
    }
    last
}

fn pick_filler(model: &InsertionModel, u: f64) -> String {
    pick(model.filler_lexicon.iter().map(|(f, &p)| (f, p)), u)
        .cloned()
        .unwrap_or_else(|| "uh".to_string())
}

/// Inserts disfluencies into `fluent` using RNG stream 0.
pub fn insert(
    model: &InsertionModel,
    fluent: &[Token],
    config: &GenerationConfig,
) -> Result<AnnotatedUtterance, InsertError> {
    insert_stream(model, fluent, config, 0)
}

/// Inserts disfluencies using the RNG stream `stream` of `config.seed`.
pub fn insert_stream(
    model: &InsertionModel,
    fluent: &[Token],
    config: &GenerationConfig,
    stream: u64,
) -> Result<AnnotatedUtterance, InsertError> {
    let events = sample_events(model, fluent, config, stream)?;
    Ok(apply_events(fluent, &events)?)
}

/// Draws the events [`insert_stream`] realizes.
///
/// Every boundary consumes exactly three uniforms (event, kind, detail), so
/// a boundary's draws do not depend on what happened elsewhere, and an event
/// drawn at some rate is also drawn at every higher rate.
pub fn sample_events(
    model: &InsertionModel,
    fluent: &[Token],
    config: &GenerationConfig,
    stream: u64,
) -> Result<Vec<DisfluencyEvent>, InsertError> {
    config.validate()?;
    if fluent.is_empty() {
        return Err(InsertError::EmptyInput);
    }
    if let Some(index) = fluent.iter().position(|t| !t.is_word()) {
        return Err(EventError::NotFluent { index }.into());
    }
    let n = fluent.len();
    let boundaries = plan(model, fluent, &config.allow_kinds);
    let r = config.target_rate;
    let required = r * n as f64 / (1.0 - r);

    let mut capacity: Vec<f64> = boundaries
        .iter()
        .filter(|b| b.p > 0.0)
        .map(|b| b.expected_tokens)
        .collect();
    capacity.sort_by(|a, b| b.total_cmp(a));
    let reachable: f64 = capacity.iter().take(config.max_events_per_utterance).sum();
    let max_rate = reachable / (n as f64 + reachable);
    let unreachable = InsertError::RateUnreachable {
        target: r,
        max: max_rate,
    };
    if required > reachable + 1e-9 {
        return Err(unreachable);
    }
    let scale = calibrate(&boundaries, required).ok_or(unreachable)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let mut events = Vec::new();
    // Ends of the repair regions open at the current boundary.
    let mut open: Vec<usize> = Vec::new();
    for (b, boundary) in boundaries.iter().enumerate() {
        let (u_event, u_kind, u_detail): (f64, f64, f64) =
            (rng.random(), rng.random(), rng.random());
        while open.last().is_some_and(|&end| end <= b) {
            open.pop();
        }
        if events.len() >= config.max_events_per_utterance
            || u_event >= (scale * boundary.p).min(1.0)
        {
            continue;
        }
        let Some(t) = pick(boundary.kinds.iter().copied(), u_kind) else {
            continue;
        };
        let kind = match t {
            EventType::Filler => EventKind::Filler {
                token: pick_filler(model, u_detail),
            },
            EventType::SilentPause => EventKind::SilentPause,
            EventType::FalseStart => EventKind::FalseStart {
                fragment: fragment_for(&fluent[b].text).expect("feasible"),
            },
            EventType::Substitution => EventKind::Substitution {
                tokens: vec![fluent[b].text.clone(), pick_filler(model, u_detail)],
            },
            EventType::Repetition => {
                let k = pick(
                    model.repetition_len_dist.iter().map(|(&k, &p)| (k, p)),
                    u_detail,
                )
                .unwrap_or(1);
                let limit = open.last().copied().unwrap_or(n);
                let len = k.min(limit - b).max(1);
                open.push(b + len);
                EventKind::Repetition { len }
            }
        };
        events.push(DisfluencyEvent::new(kind, b));
    }
    log::trace!("stream {stream}: {} events, scale {scale:.4}", events.len());
    Ok(events)
}

/// Runs [`insert_stream`] over a batch in parallel; utterance `i` uses
/// stream `i`, so results do not depend on scheduling.
pub fn insert_batch(
    model: &InsertionModel,
    utterances: &[Vec<Token>],
    config: &GenerationConfig,
) -> Vec<Result<AnnotatedUtterance, InsertError>> {
    utterances
        .par_iter()
        .enumerate()
        .map(|(i, fluent)| insert_stream(model, fluent, config, i as u64))
        .collect()
}

#[cfg(test)]
fn expected_inserted(model: &InsertionModel, fluent: &[Token], config: &GenerationConfig) -> f64 {
    let boundaries = plan(model, fluent, &config.allow_kinds);
    let r = config.target_rate;
    let s = calibrate(&boundaries, r * fluent.len() as f64 / (1.0 - r)).unwrap();
    boundaries
        .iter()
        .map(|b| (s * b.p).min(1.0) * b.expected_tokens)
        .sum()
}
