//! Statistical disfluency insertion.
//!
//! Training aligns each fluent/disfluent pair ([`align_pair`]), reads the
//! unaligned material off as typed events ([`extract_events`]) and counts
//! them per boundary context ([`train_model`]). Generation draws one
//! independent event decision per fluent boundary, with probabilities
//! rescaled so the expected disfluency rate hits a target ([`insert`]), and
//! realizes the events as annotated spans ([`apply_events`]).

mod align;
mod events;
mod generate;
mod model;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use align::{align_pair, AlignError, Alignment};
pub use events::{apply_events, extract_events, fragment_for, EventError};
pub use generate::{
    insert, insert_batch, insert_stream, sample_events, GenerationConfig, InsertError,
    MAX_TARGET_RATE,
};
pub use model::{
    train_model, BoundaryContext, InsertionModel, ModelError, PositionBucket, PrevClass,
    TrainError, MODEL_VERSION,
};

/// Longest repetition the model generates.
pub const MAX_REPETITION: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    /// The next `len` fluent tokens are spoken twice.
    Repetition {
        len: usize,
    },
    Filler {
        token: String,
    },
    /// A truncated onset of the next fluent token, e.g. `b-` before `birthday`.
    FalseStart {
        fragment: String,
    },
    SilentPause,
    /// Abandoned material replaced by the next fluent token.
    Substitution {
        tokens: Vec<String>,
    },
}

impl EventKind {
    pub fn event_type(&self) -> EventType {
        match self {
            EventKind::Repetition { .. } => EventType::Repetition,
            EventKind::Filler { .. } => EventType::Filler,
            EventKind::FalseStart { .. } => EventType::FalseStart,
            EventKind::SilentPause => EventType::SilentPause,
            EventKind::Substitution { .. } => EventType::Substitution,
        }
    }

    /// Number of disfluent tokens the event adds.
    pub fn inserted_tokens(&self) -> usize {
        match self {
            EventKind::Repetition { len } => *len,
            EventKind::Substitution { tokens } => tokens.len(),
            _ => 1,
        }
    }
}

/// Event kinds without their payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventType {
    Repetition,
    Filler,
    FalseStart,
    SilentPause,
    Substitution,
}

impl EventType {
    pub const ALL: [EventType; 5] = [
        EventType::Repetition,
        EventType::Filler,
        EventType::FalseStart,
        EventType::SilentPause,
        EventType::Substitution,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventType::Repetition => "repetition",
            EventType::Filler => "filler",
            EventType::FalseStart => "false-start",
            EventType::SilentPause => "silent-pause",
            EventType::Substitution => "substitution",
        }
    }

    pub fn from_name(name: &str) -> Option<EventType> {
        EventType::ALL.into_iter().find(|t| t.name() == name)
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An event inserted immediately before fluent token `anchor`
/// (`anchor == n` means the end of the utterance).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DisfluencyEvent {
    pub kind: EventKind,
    pub anchor: usize,
}

impl DisfluencyEvent {
    pub fn new(kind: EventKind, anchor: usize) -> Self {
        DisfluencyEvent { kind, anchor }
    }
}
