//! BIO tagging over the label set {RM, RP, FL, SP}.
//!
//! BIO has no way to express nesting. [`to_bio`] labels each token with its
//! innermost labelled span, so nested restarts come back from [`from_bio`]
//! as a flat chain of repairs (see [`super::flatten`]). Editing terms are
//! tagged as fillers since both are removed when stripping; discourse
//! markers have no label and are tagged `O`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::{
    is_fragment_text, AnnotatedUtterance, AnnotationError, DisfluencySpan, SpanKind, Token,
    TokenKind, SILENCE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BioLabel {
    /// reparandum
    RM,
    /// repair
    RP,
    /// filler or editing term
    FL,
    /// silent pause
    SP,
}

impl BioLabel {
    fn of(kind: SpanKind) -> Option<BioLabel> {
        match kind {
            SpanKind::Reparandum => Some(BioLabel::RM),
            SpanKind::Repair => Some(BioLabel::RP),
            SpanKind::Filler | SpanKind::EditingTerm => Some(BioLabel::FL),
            SpanKind::SilentPause => Some(BioLabel::SP),
            SpanKind::DiscourseMarker => None,
        }
    }

    fn span_kind(self) -> SpanKind {
        match self {
            BioLabel::RM => SpanKind::Reparandum,
            BioLabel::RP => SpanKind::Repair,
            BioLabel::FL => SpanKind::Filler,
            BioLabel::SP => SpanKind::SilentPause,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            BioLabel::RM => "RM",
            BioLabel::RP => "RP",
            BioLabel::FL => "FL",
            BioLabel::SP => "SP",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BioTag {
    B(BioLabel),
    I(BioLabel),
    O,
}

impl BioTag {
    pub fn label(self) -> Option<BioLabel> {
        match self {
            BioTag::B(l) | BioTag::I(l) => Some(l),
            BioTag::O => None,
        }
    }
}

impl fmt::Display for BioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BioTag::B(l) => write!(f, "B-{}", l.as_str()),
            BioTag::I(l) => write!(f, "I-{}", l.as_str()),
            BioTag::O => f.write_str("O"),
        }
    }
}

impl FromStr for BioTag {
    type Err = BioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(BioTag::O);
        }
        let unknown = || BioError::UnknownTag(s.to_string());
        let (pos, label) = s.split_once('-').ok_or_else(unknown)?;
        let label = match label {
            "RM" => BioLabel::RM,
            "RP" => BioLabel::RP,
            "FL" => BioLabel::FL,
            "SP" => BioLabel::SP,
            _ => return Err(unknown()),
        };
        match pos {
            "B" => Ok(BioTag::B(label)),
            "I" => Ok(BioTag::I(label)),
            _ => Err(unknown()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BioError {
    #[error("{tokens} tokens but {tags} tags")]
    LengthMismatch { tokens: usize, tags: usize },
    #[error("ill-formed tag sequence at token {index}")]
    IllFormedTagSequence { index: usize },
    #[error("unknown tag {0:?}")]
    UnknownTag(String),
    #[error("expected `token<TAB>tag`")]
    BadLine,
    #[error(transparent)]
    Invalid(#[from] AnnotationError),
}

/// One tag per token; the innermost labelled span wins.
pub fn to_bio(u: &AnnotatedUtterance) -> Vec<BioTag> {
    let spans = u.spans();
    let mut owner: Vec<Option<usize>> = vec![None; u.len()];
    // Later spans in document order are nested deeper, so they overwrite.
    for (k, span) in spans.iter().enumerate() {
        if BioLabel::of(span.kind).is_none() {
            continue;
        }
        for slot in &mut owner[span.start..span.end] {
            *slot = Some(k);
        }
    }
    owner
        .iter()
        .enumerate()
        .map(|(i, o)| match *o {
            None => BioTag::O,
            Some(k) => {
                let label = BioLabel::of(spans[k].kind).unwrap();
                if i > 0 && owner[i - 1] == Some(k) {
                    BioTag::I(label)
                } else {
                    BioTag::B(label)
                }
            }
        })
        .collect()
}

/// Rebuilds a depth-0 utterance from tokens and their tags.
pub fn from_bio(tokens: Vec<Token>, tags: &[BioTag]) -> Result<AnnotatedUtterance, BioError> {
    if tokens.len() != tags.len() {
        return Err(BioError::LengthMismatch {
            tokens: tokens.len(),
            tags: tags.len(),
        });
    }
    let mut spans: Vec<DisfluencySpan> = Vec::new();
    let mut open: Option<(BioLabel, usize)> = None;
    for (i, &tag) in tags.iter().enumerate() {
        match tag {
            BioTag::I(label) => match open {
                Some((l, _)) if l == label => continue,
                _ => return Err(BioError::IllFormedTagSequence { index: i }),
            },
            BioTag::B(_) | BioTag::O => {
                if let Some((l, start)) = open.take() {
                    spans.push(DisfluencySpan::new(l.span_kind(), start, i, 0));
                }
                if let BioTag::B(label) = tag {
                    open = Some((label, i));
                }
            }
        }
    }
    if let Some((l, start)) = open {
        spans.push(DisfluencySpan::new(l.span_kind(), start, tags.len(), 0));
    }
    match AnnotatedUtterance::new(tokens, spans) {
        Ok(u) => Ok(u),
        Err(AnnotationError::OrphanRepair(s)) => {
            Err(BioError::IllFormedTagSequence { index: s.start })
        }
        Err(e) => Err(e.into()),
    }
}

fn kind_for_tag(text: &str, tag: BioTag) -> TokenKind {
    match (text, tag.label()) {
        (SILENCE, _) => TokenKind::SilentPause,
        (_, Some(BioLabel::FL)) => TokenKind::FilledPause,
        (t, Some(BioLabel::RM)) if is_fragment_text(t) => TokenKind::FalseStartFragment,
        _ => TokenKind::Word,
    }
}

/// Error in a BIO TSV document, with its 1-based line.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {error}")]
pub struct BioReadError {
    pub line: usize,
    pub error: BioError,
}

/// Reads TSV (`token<TAB>tag` per line, blank line between utterances).
///
/// Token kinds are inferred from text and tag: `<sil>` is a silent pause,
/// FL tokens are filled pauses, fragment-shaped RM tokens are false starts.
pub fn read_bio(text: &str) -> Result<Vec<AnnotatedUtterance>, BioReadError> {
    let mut out = Vec::new();
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let mut first_line = 0;
    let flush = |tokens: &mut Vec<Token>,
                 tags: &mut Vec<BioTag>,
                 first_line: usize,
                 out: &mut Vec<AnnotatedUtterance>| {
        if tokens.is_empty() {
            return Ok(());
        }
        let u = from_bio(std::mem::take(tokens), tags).map_err(|error| {
            let line = match error {
                BioError::IllFormedTagSequence { index } => first_line + index,
                _ => first_line,
            };
            BioReadError { line, error }
        })?;
        tags.clear();
        out.push(u);
        Ok(())
    };
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() {
            flush(&mut tokens, &mut tags, first_line, &mut out)?;
            continue;
        }
        let (word, tag) = raw.split_once('\t').ok_or(BioReadError {
            line,
            error: BioError::BadLine,
        })?;
        let tag: BioTag = tag
            .trim()
            .parse()
            .map_err(|error| BioReadError { line, error })?;
        let token = Token::new(word, kind_for_tag(word, tag)).map_err(|_| BioReadError {
            line,
            error: BioError::BadLine,
        })?;
        if tokens.is_empty() {
            first_line = line;
        }
        tokens.push(token);
        tags.push(tag);
    }
    flush(&mut tokens, &mut tags, first_line, &mut out)?;
    Ok(out)
}

pub fn write_bio(utterances: &[AnnotatedUtterance]) -> String {
    let blocks: Vec<String> = utterances
        .iter()
        .map(|u| {
            u.tokens()
                .iter()
                .zip(to_bio(u))
                .map(|(t, tag)| format!("{}\t{tag}\n", t.text))
                .collect()
        })
        .collect();
    blocks.join("\n")
}
