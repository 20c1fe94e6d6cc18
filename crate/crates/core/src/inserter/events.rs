use thiserror::Error;

use super::{DisfluencyEvent, EventKind};
use crate::annotation::{
    infer_kind, is_filler_word, is_fragment_text, AnnotatedUtterance, AnnotationError,
    DisfluencySpan, SpanKind, Token, TokenError, TokenKind,
};
use crate::corpus::ParallelPair;

fn is_filler_token(t: &Token) -> bool {
    t.kind == TokenKind::FilledPause || is_filler_word(&t.text)
}

/// The false-start fragment for `word`: its first ⌈len/2⌉ characters plus a
/// hyphen. `None` when that would not be a strict prefix or not a valid
/// fragment (one-character words, prefixes ending in `-`).
pub fn fragment_for(word: &str) -> Option<String> {
    let len = word.chars().count();
    if len < 2 {
        return None;
    }
    let stem: String = word.chars().take(len.div_ceil(2)).collect();
    let fragment = format!("{stem}-");
    is_fragment_text(&fragment).then_some(fragment)
}

/// Reads the unaligned disfluent material of a pair as typed events.
///
/// Each maximal unaligned run is classified, most specific first:
///
/// 1. a single fragment whose stem starts the next fluent token: false start;
/// 2. only `<sil>` tokens: one silent pause per token;
/// 3. a copy of the next `k` fluent tokens: repetition of length `k`;
/// 4. only fillers and pauses: one filler or pause event per token;
/// 5. anything else: substitution.
///
/// Runs at the same boundary are never split except in cases 2 and 4, so
/// two events generated at one boundary come back as one.
pub fn extract_events(pair: &ParallelPair) -> Vec<DisfluencyEvent> {
    let fluent = &pair.fluent;
    let tokens = pair.disfluent.tokens();
    let mut events = Vec::new();
    for (anchor, gap) in pair.alignment.gaps(tokens.len()).into_iter().enumerate() {
        let run = &tokens[gap];
        if run.is_empty() {
            continue;
        }
        let next = fluent.get(anchor);
        if let ([t], Some(next)) = (run, next) {
            if t.kind == TokenKind::FalseStartFragment {
                let stem = t.text.trim_end_matches('-').to_lowercase();
                if next.text.to_lowercase().starts_with(&stem) {
                    events.push(DisfluencyEvent::new(
                        EventKind::FalseStart {
                            fragment: t.text.clone(),
                        },
                        anchor,
                    ));
                    continue;
                }
            }
        }
        if run.iter().all(|t| t.kind == TokenKind::SilentPause) {
            events.extend(
                run.iter()
                    .map(|_| DisfluencyEvent::new(EventKind::SilentPause, anchor)),
            );
            continue;
        }
        let k = run.len();
        if anchor + k <= fluent.len()
            && run
                .iter()
                .zip(&fluent[anchor..anchor + k])
                .all(|(a, b)| a.text == b.text)
        {
            events.push(DisfluencyEvent::new(
                EventKind::Repetition { len: k },
                anchor,
            ));
            continue;
        }
        if run
            .iter()
            .all(|t| t.kind == TokenKind::SilentPause || is_filler_token(t))
        {
            events.extend(run.iter().map(|t| {
                let kind = if t.kind == TokenKind::SilentPause {
                    EventKind::SilentPause
                } else {
                    EventKind::Filler {
                        token: t.text.clone(),
                    }
                };
                DisfluencyEvent::new(kind, anchor)
            }));
            continue;
        }
        events.push(DisfluencyEvent::new(
            EventKind::Substitution {
                tokens: run.iter().map(|t| t.text.clone()).collect(),
            },
            anchor,
        ));
    }
    events
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EventError {
    #[error("event anchor {anchor} is beyond the {len} fluent tokens")]
    AnchorOutOfRange { anchor: usize, len: usize },
    #[error("event at {anchor} needs a following fluent token")]
    NoNextToken { anchor: usize },
    #[error("repetition of {len} tokens at {anchor} does not fit")]
    BadRepetition { anchor: usize, len: usize },
    #[error("substitution at {anchor} has no reparandum material")]
    BadSubstitution { anchor: usize },
    #[error("two restarts at boundary {anchor}, or a restart after other material there")]
    StackedRestarts { anchor: usize },
    #[error("restart at {anchor} crosses the end of an enclosing repetition")]
    CrossingEvents { anchor: usize },
    #[error("fluent token {index} is not a plain word")]
    NotFluent { index: usize },
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
}

/// Builds the disfluent utterance that realizes `events` on `fluent`.
///
/// Fillers, pauses and false starts are emitted in the given order before
/// their anchor. A repetition or substitution at an anchor must come last
/// there; it opens a reparandum/repair pair whose repair covers the next
/// `len` fluent tokens (one for a substitution), and events anchored inside
/// that repair nest one level deeper. Trailing fillers of a substitution
/// become its editing term: `[ want + {E um} want ]`.
pub fn apply_events(
    fluent: &[Token],
    events: &[DisfluencyEvent],
) -> Result<AnnotatedUtterance, EventError> {
    let n = fluent.len();
    if let Some(index) = fluent.iter().position(|t| !t.is_word()) {
        return Err(EventError::NotFluent { index });
    }
    let mut by_anchor: Vec<Vec<&DisfluencyEvent>> = vec![Vec::new(); n + 1];
    for e in events {
        if e.anchor > n {
            return Err(EventError::AnchorOutOfRange {
                anchor: e.anchor,
                len: n,
            });
        }
        by_anchor[e.anchor].push(e);
    }
    for (anchor, group) in by_anchor.iter().enumerate() {
        let restarts = group
            .iter()
            .filter(|e| {
                matches!(
                    e.kind,
                    EventKind::Repetition { .. } | EventKind::Substitution { .. }
                )
            })
            .count();
        let last_is_restart = group.last().is_some_and(|e| {
            matches!(
                e.kind,
                EventKind::Repetition { .. } | EventKind::Substitution { .. }
            )
        });
        if restarts > 1 || (restarts == 1 && !last_is_restart) {
            return Err(EventError::StackedRestarts { anchor });
        }
    }
    let mut builder = Builder {
        fluent,
        by_anchor: &by_anchor,
        tokens: Vec::new(),
        spans: Vec::new(),
    };
    builder.region(0, n, 0, false)?;
    builder.simple_events(n, 0)?;
    Ok(AnnotatedUtterance::new(builder.tokens, builder.spans)?)
}

struct Builder<'a> {
    fluent: &'a [Token],
    by_anchor: &'a [Vec<&'a DisfluencyEvent>],
    tokens: Vec<Token>,
    spans: Vec<DisfluencySpan>,
}

impl Builder<'_> {
    fn push(&mut self, token: Token, span: Option<(SpanKind, u32)>) {
        let start = self.tokens.len();
        self.tokens.push(token);
        if let Some((kind, depth)) = span {
            self.spans
                .push(DisfluencySpan::new(kind, start, start + 1, depth));
        }
    }

    fn simple_events(&mut self, anchor: usize, depth: u32) -> Result<(), EventError> {
        for e in &self.by_anchor[anchor] {
            match &e.kind {
                EventKind::Filler { token } => {
                    let t = Token::new(token.clone(), TokenKind::FilledPause)?;
                    self.push(t, Some((SpanKind::Filler, depth)));
                }
                EventKind::SilentPause => {
                    self.push(Token::silence(), Some((SpanKind::SilentPause, depth)))
                }
                EventKind::FalseStart { fragment } => {
                    if anchor == self.fluent.len() {
                        return Err(EventError::NoNextToken { anchor });
                    }
                    let t = Token::new(fragment.clone(), TokenKind::FalseStartFragment)?;
                    self.push(t, Some((SpanKind::Reparandum, depth)));
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn region(
        &mut self,
        lo: usize,
        hi: usize,
        depth: u32,
        skip_lo: bool,
    ) -> Result<(), EventError> {
        let mut b = lo;
        while b < hi {
            if b == lo && skip_lo {
                self.tokens.push(self.fluent[b].clone());
                b += 1;
                continue;
            }
            self.simple_events(b, depth)?;
            let restart = self.by_anchor[b].last().map(|e| &e.kind);
            match restart {
                Some(EventKind::Repetition { len }) => {
                    let len = *len;
                    if len == 0 || b + len > self.fluent.len() {
                        return Err(EventError::BadRepetition { anchor: b, len });
                    }
                    if b + len > hi {
                        return Err(EventError::CrossingEvents { anchor: b });
                    }
                    let start = self.tokens.len();
                    self.tokens.extend_from_slice(&self.fluent[b..b + len]);
                    self.spans.push(DisfluencySpan::new(
                        SpanKind::Reparandum,
                        start,
                        self.tokens.len(),
                        depth,
                    ));
                    self.repair(b, b + len, depth)?;
                    b += len;
                }
                Some(EventKind::Substitution { tokens }) => {
                    let split = tokens
                        .iter()
                        .rposition(|t| !is_filler_word(t))
                        .map_or(0, |i| i + 1);
                    if split == 0 {
                        return Err(EventError::BadSubstitution { anchor: b });
                    }
                    let start = self.tokens.len();
                    for text in &tokens[..split] {
                        let kind = infer_kind(text, [SpanKind::Reparandum]);
                        self.tokens.push(Token::new(text.clone(), kind)?);
                    }
                    self.spans.push(DisfluencySpan::new(
                        SpanKind::Reparandum,
                        start,
                        self.tokens.len(),
                        depth,
                    ));
                    if split < tokens.len() {
                        let start = self.tokens.len();
                        for text in &tokens[split..] {
                            self.tokens.push(Token::new(text.clone(), TokenKind::Word)?);
                        }
                        self.spans.push(DisfluencySpan::new(
                            SpanKind::EditingTerm,
                            start,
                            self.tokens.len(),
                            depth,
                        ));
                    }
                    self.repair(b, b + 1, depth)?;
                    b += 1;
                }
                _ => {
                    self.tokens.push(self.fluent[b].clone());
                    b += 1;
                }
            }
        }
        Ok(())
    }

    fn repair(&mut self, lo: usize, hi: usize, depth: u32) -> Result<(), EventError> {
        let start = self.tokens.len();
        self.region(lo, hi, depth + 1, true)?;
        self.spans.push(DisfluencySpan::new(
            SpanKind::Repair,
            start,
            self.tokens.len(),
            depth,
        ));
        Ok(())
    }
}
