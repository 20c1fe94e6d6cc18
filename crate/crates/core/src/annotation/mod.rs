//! Disfluency-annotated utterances.
//!
//! An [`AnnotatedUtterance`] is a flat token sequence plus a set of typed,
//! properly nested [`DisfluencySpan`]s. Utterances come from three places:
//! the bracket markup ([`parse_annotated`]), BIO tag sequences
//! ([`from_bio`]), and the JSONL pair format in [`crate::corpus`]. All three
//! go through [`AnnotatedUtterance::new`], which enforces the invariants.
//!
//! Markup follows Treebank "dysfluency" conventions:
//!
//! ```text
//! {F uh}        filler            {E I mean}   editing term
//! {D well}      discourse marker  <sil>        silent pause
//! [ I + I ]     reparandum + repair, `+` is the interruption point
//! [ we + ]      deletion restart (empty repair)
//! ```

mod bio;
mod markup;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bio::{from_bio, read_bio, to_bio, write_bio, BioError, BioLabel, BioTag};
pub use markup::{parse_annotated, serialize, ParseError};

/// Reserved surface form of a silent pause.
pub const SILENCE: &str = "<sil>";

/// Lexicalized hesitations recognised in unannotated text.
pub const FILLER_WORDS: &[&str] = &[
    "uh", "um", "erm", "er", "ah", "eh", "hm", "hmm", "mm", "uhm", "umm", "uhh",
];

pub fn is_filler_word(text: &str) -> bool {
    let lower = text.to_lowercase();
    FILLER_WORDS.contains(&lower.as_str())
}

/// `true` for word fragments such as `b-` or `innova-`: one trailing hyphen
/// after at least one non-hyphen character.
pub fn is_fragment_text(text: &str) -> bool {
    match text.strip_suffix('-') {
        Some(stem) => !stem.is_empty() && !stem.ends_with('-'),
        None => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TokenKind {
    Word,
    FilledPause,
    SilentPause,
    FalseStartFragment,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenError {
    #[error("token text is empty")]
    Empty,
    #[error("token {0:?} contains whitespace")]
    Whitespace(String),
    #[error("{0:?} is not a word fragment (expected e.g. `b-`)")]
    BadFragment(String),
    #[error("silent pause tokens must be spelled `<sil>`, got {0:?}")]
    BadSilence(String),
    #[error("`<sil>` is reserved for silent pauses")]
    ReservedSilence,
}

impl Token {
    pub fn new(text: impl Into<String>, kind: TokenKind) -> Result<Self, TokenError> {
        let text = text.into();
        if text.is_empty() {
            return Err(TokenError::Empty);
        }
        if text.chars().any(char::is_whitespace) {
            return Err(TokenError::Whitespace(text));
        }
        match kind {
            TokenKind::FalseStartFragment if !is_fragment_text(&text) => {
                Err(TokenError::BadFragment(text))
            }
            TokenKind::SilentPause if text != SILENCE => Err(TokenError::BadSilence(text)),
            TokenKind::Word | TokenKind::FilledPause if text == SILENCE => {
                Err(TokenError::ReservedSilence)
            }
            _ => Ok(Token { text, kind }),
        }
    }

    /// A plain word. Panics on empty or whitespace-bearing text.
    pub fn word(text: impl Into<String>) -> Self {
        Token::new(text, TokenKind::Word).expect("invalid word token")
    }

    pub fn silence() -> Self {
        Token {
            text: SILENCE.to_string(),
            kind: TokenKind::SilentPause,
        }
    }

    pub fn is_word(&self) -> bool {
        self.kind == TokenKind::Word
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Splits fluent text on whitespace into word tokens.
pub fn words(text: &str) -> Vec<Token> {
    text.split_whitespace().map(Token::word).collect()
}

pub fn token_texts(tokens: &[Token]) -> Vec<String> {
    tokens.iter().map(|t| t.text.clone()).collect()
}

/// Kind of a token as determined by the spans enclosing it. This is the one
/// rule shared by the markup parser and every loader that does not store
/// token kinds explicitly.
pub(crate) fn infer_kind(text: &str, enclosing: impl IntoIterator<Item = SpanKind>) -> TokenKind {
    if text == SILENCE {
        return TokenKind::SilentPause;
    }
    let mut in_brace = false;
    for kind in enclosing {
        match kind {
            SpanKind::Filler => return TokenKind::FilledPause,
            SpanKind::EditingTerm | SpanKind::DiscourseMarker => in_brace = true,
            _ => {}
        }
    }
    if !in_brace && is_fragment_text(text) {
        TokenKind::FalseStartFragment
    } else {
        TokenKind::Word
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpanKind {
    Filler,
    Reparandum,
    Repair,
    SilentPause,
    EditingTerm,
    DiscourseMarker,
}

impl SpanKind {
    /// Spans whose tokens are removed when recovering the fluent utterance.
    pub fn is_removed(self) -> bool {
        matches!(
            self,
            SpanKind::Filler | SpanKind::Reparandum | SpanKind::EditingTerm | SpanKind::SilentPause
        )
    }
}

/// A typed token range `start..end` at a nesting `depth`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(
    into = "(SpanKind, usize, usize, u32)",
    from = "(SpanKind, usize, usize, u32)"
)]
pub struct DisfluencySpan {
    pub kind: SpanKind,
    pub start: usize,
    pub end: usize,
    pub depth: u32,
}

impl From<DisfluencySpan> for (SpanKind, usize, usize, u32) {
    fn from(s: DisfluencySpan) -> Self {
        (s.kind, s.start, s.end, s.depth)
    }
}

impl From<(SpanKind, usize, usize, u32)> for DisfluencySpan {
    fn from((kind, start, end, depth): (SpanKind, usize, usize, u32)) -> Self {
        DisfluencySpan {
            kind,
            start,
            end,
            depth,
        }
    }
}

impl DisfluencySpan {
    pub fn new(kind: SpanKind, start: usize, end: usize, depth: u32) -> Self {
        DisfluencySpan {
            kind,
            start,
            end,
            depth,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn contains_index(&self, i: usize) -> bool {
        self.start <= i && i < self.end
    }

    /// `self` encloses `other`: wider range, or the same range at a smaller depth.
    fn encloses(&self, other: &DisfluencySpan) -> bool {
        self.start <= other.start
            && other.end <= self.end
            && (self.len() > other.len() || self.depth < other.depth)
    }

    fn disjoint(&self, other: &DisfluencySpan) -> bool {
        self.end <= other.start || other.end <= self.start
    }

    /// Document order: by start, outer spans first.
    fn order_key(&self) -> (usize, std::cmp::Reverse<usize>, u32) {
        (self.start, std::cmp::Reverse(self.end), self.depth)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnnotationError {
    #[error("span {kind:?} {start}..{end} is out of range for {len} tokens")]
    SpanOutOfRange {
        kind: SpanKind,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("spans {0:?} and {1:?} overlap without nesting")]
    CrossingSpans(DisfluencySpan, DisfluencySpan),
    #[error("span {span:?} has {expected} enclosing spans but depth {}", span.depth)]
    BadDepth { span: DisfluencySpan, expected: u32 },
    #[error("spans {0:?} and {1:?} cover the same tokens at the same depth")]
    SameRangeSameDepth(DisfluencySpan, DisfluencySpan),
    #[error("repair {0:?} is not preceded by a reparandum")]
    OrphanRepair(DisfluencySpan),
    #[error("token {index} ({text:?}) of kind {kind:?} is outside a matching span")]
    UncoveredToken {
        index: usize,
        text: String,
        kind: TokenKind,
    },
    #[error("silent pause span {0:?} covers non-pause tokens")]
    BadSilenceSpan(DisfluencySpan),
    #[error("utterance has no tokens")]
    EmptyUtterance,
}

/// Tokens plus properly nested disfluency spans, kept in document order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnnotatedUtterance {
    tokens: Vec<Token>,
    spans: Vec<DisfluencySpan>,
}

impl AnnotatedUtterance {
    /// Validates every span and token invariant and sorts spans into
    /// document order.
    pub fn new(
        tokens: Vec<Token>,
        mut spans: Vec<DisfluencySpan>,
    ) -> Result<Self, AnnotationError> {
        spans.sort_by_key(DisfluencySpan::order_key);
        spans.dedup();
        validate(&tokens, &spans)?;
        Ok(AnnotatedUtterance { tokens, spans })
    }

    /// An utterance with no disfluency annotation.
    pub fn fluent(tokens: Vec<Token>) -> Self {
        AnnotatedUtterance {
            tokens,
            spans: Vec::new(),
        }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn spans(&self) -> &[DisfluencySpan] {
        &self.spans
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn texts(&self) -> Vec<String> {
        token_texts(&self.tokens)
    }

    /// Largest span depth, or `None` without spans.
    pub fn max_depth(&self) -> Option<u32> {
        self.spans.iter().map(|s| s.depth).max()
    }

    /// Per-token flag: does the token fall inside a removed span?
    pub fn removed_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.tokens.len()];
        for span in self.spans.iter().filter(|s| s.kind.is_removed()) {
            for m in &mut mask[span.start..span.end] {
                *m = true;
            }
        }
        mask
    }

    /// Number of tokens inside removed spans.
    pub fn disfluent_token_count(&self) -> usize {
        self.removed_mask().into_iter().filter(|&m| m).count()
    }

    /// Innermost span covering token `i`.
    pub fn innermost_span(&self, i: usize) -> Option<&DisfluencySpan> {
        // Document order puts inner spans after their ancestors.
        self.spans.iter().rev().find(|s| s.contains_index(i))
    }
}

impl fmt::Display for AnnotatedUtterance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize(self))
    }
}

fn validate(tokens: &[Token], spans: &[DisfluencySpan]) -> Result<(), AnnotationError> {
    let n = tokens.len();
    for s in spans {
        if s.start >= s.end || s.end > n {
            return Err(AnnotationError::SpanOutOfRange {
                kind: s.kind,
                start: s.start,
                end: s.end,
                len: n,
            });
        }
    }
    for (i, a) in spans.iter().enumerate() {
        for b in &spans[i + 1..] {
            if a.disjoint(b) {
                continue;
            }
            // `a` precedes `b` in document order, so only `a` can enclose.
            if !a.encloses(b) {
                if a.start == b.start && a.end == b.end {
                    return Err(AnnotationError::SameRangeSameDepth(*a, *b));
                }
                return Err(AnnotationError::CrossingSpans(*a, *b));
            }
        }
    }
    for s in spans {
        let enclosing = spans.iter().filter(|o| o.encloses(s)).count();
        if s.depth as usize != enclosing {
            return Err(AnnotationError::BadDepth {
                expected: enclosing as u32,
                span: *s,
            });
        }
    }
    for (i, s) in spans.iter().enumerate() {
        match s.kind {
            SpanKind::Repair if !repair_has_reparandum(spans, i) => {
                return Err(AnnotationError::OrphanRepair(*s));
            }
            SpanKind::SilentPause
                if tokens[s.start..s.end]
                    .iter()
                    .any(|t| t.kind != TokenKind::SilentPause) =>
            {
                return Err(AnnotationError::BadSilenceSpan(*s));
            }
            _ => {}
        }
    }
    for (index, token) in tokens.iter().enumerate() {
        let needed = match token.kind {
            TokenKind::Word => continue,
            TokenKind::FilledPause => SpanKind::Filler,
            TokenKind::SilentPause => SpanKind::SilentPause,
            TokenKind::FalseStartFragment => SpanKind::Reparandum,
        };
        if !spans
            .iter()
            .any(|s| s.kind == needed && s.contains_index(index))
        {
            return Err(AnnotationError::UncoveredToken {
                index,
                text: token.text.clone(),
                kind: token.kind,
            });
        }
    }
    Ok(())
}

/// Walks left from a repair through filler and editing-term spans at the
/// same depth until it meets a reparandum. Flattening a nested restart to
/// BIO also chains a repair onto another repair or onto a pause that opened
/// an inner repair, so those are walked over too.
fn repair_has_reparandum(spans: &[DisfluencySpan], index: usize) -> bool {
    let depth = spans[index].depth;
    let mut boundary = spans[index].start;
    loop {
        let prev = spans
            .iter()
            .find(|s| s.depth == depth && s.end == boundary && s.start < boundary);
        match prev.map(|s| s.kind) {
            Some(SpanKind::Reparandum) => return true,
            Some(
                SpanKind::Filler | SpanKind::EditingTerm | SpanKind::Repair | SpanKind::SilentPause,
            ) => {
                boundary = prev.unwrap().start;
            }
            _ => return false,
        }
    }
}

/// The fluent utterance: every token outside filler, reparandum, editing-term
/// and silent-pause spans, in order.
pub fn strip_disfluencies(u: &AnnotatedUtterance) -> Vec<Token> {
    u.tokens
        .iter()
        .zip(u.removed_mask())
        .filter(|(_, removed)| !removed)
        .map(|(t, _)| t.clone())
        .collect()
}

/// Fraction of tokens inside removed spans. Repair tokens count as fluent.
pub fn disfluency_rate(u: &AnnotatedUtterance) -> Result<f64, AnnotationError> {
    if u.is_empty() {
        return Err(AnnotationError::EmptyUtterance);
    }
    Ok(u.disfluent_token_count() as f64 / u.len() as f64)
}

/// Depth-0 projection of `u` through BIO tags: innermost span wins per
/// token, editing terms become fillers, discourse markers are dropped.
pub fn flatten(u: &AnnotatedUtterance) -> AnnotatedUtterance {
    let tags = to_bio(u);
    from_bio(u.tokens.clone(), &tags).expect("BIO tags of a valid utterance are well formed")
}
