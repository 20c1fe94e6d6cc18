use thiserror::Error;

use super::{
    infer_kind, AnnotatedUtterance, AnnotationError, DisfluencySpan, SpanKind, Token, TokenKind,
    SILENCE,
};

/// Markup syntax errors. Offsets are byte offsets into the input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unbalanced bracket at byte {offset}")]
    UnbalancedBracket { offset: usize },
    #[error("restart closed at byte {offset} has no interruption point `+`")]
    MissingInterruptionPoint { offset: usize },
    #[error("empty brace at byte {offset}")]
    EmptyBrace { offset: usize },
    #[error("unknown brace type at byte {offset} (expected {{F, {{E or {{D)")]
    UnknownBrace { offset: usize },
    #[error("interruption point at byte {offset} outside a restart or repeated")]
    MisplacedInterruptionPoint { offset: usize },
    #[error("restart at byte {offset} has an empty reparandum")]
    EmptyReparandum { offset: usize },
    #[error("only plain words may appear inside braces (byte {offset})")]
    NestedInBrace { offset: usize },
    #[error("annotation invariant violated: {0}")]
    Invalid(#[from] AnnotationError),
}

#[derive(Debug, Clone, PartialEq)]
enum Lexeme<'a> {
    OpenBrace(SpanKind),
    CloseBrace,
    OpenBracket,
    CloseBracket,
    Plus,
    Word(&'a str),
}

fn lex(input: &str) -> Result<Vec<(usize, Lexeme<'_>)>, ParseError> {
    let bytes = input.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = input[i..].chars().next().unwrap();
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        match c {
            '[' => out.push((i, Lexeme::OpenBracket)),
            ']' => out.push((i, Lexeme::CloseBracket)),
            '}' => out.push((i, Lexeme::CloseBrace)),
            '{' => {
                let kind = match bytes.get(i + 1) {
                    Some(b'F') => SpanKind::Filler,
                    Some(b'E') => SpanKind::EditingTerm,
                    Some(b'D') => SpanKind::DiscourseMarker,
                    _ => return Err(ParseError::UnknownBrace { offset: i }),
                };
                match input[i + 2..].chars().next() {
                    None | Some('}') => {}
                    Some(c) if c.is_whitespace() => {}
                    Some(_) => return Err(ParseError::UnknownBrace { offset: i }),
                }
                out.push((i, Lexeme::OpenBrace(kind)));
                i += 2;
                continue;
            }
            _ => {
                let end = input[i..]
                    .find(|c: char| c.is_whitespace() || matches!(c, '[' | ']' | '{' | '}'))
                    .map_or(input.len(), |e| i + e);
                let word = &input[i..end];
                out.push((
                    i,
                    if word == "+" {
                        Lexeme::Plus
                    } else {
                        Lexeme::Word(word)
                    },
                ));
                i = end;
                continue;
            }
        }
        i += 1;
    }
    Ok(out)
}

#[derive(Clone, Copy)]
struct Context {
    depth: u32,
    /// The innermost open construct is a reparandum.
    in_reparandum: bool,
}

enum Stop {
    End,
    Plus(usize),
    Close(usize),
}

struct Parser<'a> {
    lexemes: Vec<(usize, Lexeme<'a>)>,
    pos: usize,
    tokens: Vec<Token>,
    spans: Vec<DisfluencySpan>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&(usize, Lexeme<'a>)> {
        self.lexemes.get(self.pos)
    }

    fn push_span(&mut self, kind: SpanKind, start: usize, depth: u32) {
        self.spans
            .push(DisfluencySpan::new(kind, start, self.tokens.len(), depth));
    }

    fn sequence(&mut self, ctx: Context) -> Result<Stop, ParseError> {
        while let Some((offset, lexeme)) = self.peek().cloned() {
            self.pos += 1;
            match lexeme {
                Lexeme::Word(text) => self.word(text, ctx),
                Lexeme::OpenBrace(kind) => self.brace(kind, offset, ctx.depth)?,
                Lexeme::OpenBracket => self.restart(offset, ctx.depth)?,
                Lexeme::Plus => return Ok(Stop::Plus(offset)),
                Lexeme::CloseBracket => return Ok(Stop::Close(offset)),
                Lexeme::CloseBrace => return Err(ParseError::UnbalancedBracket { offset }),
            }
        }
        Ok(Stop::End)
    }

    fn word(&mut self, text: &str, ctx: Context) {
        let start = self.tokens.len();
        let kind = infer_kind(text, []);
        self.tokens.push(Token {
            text: text.to_string(),
            kind,
        });
        match kind {
            TokenKind::SilentPause => self.push_span(SpanKind::SilentPause, start, ctx.depth),
            // A bare fragment is a deletion restart: `b-` reads as `[ b- + ]`.
            TokenKind::FalseStartFragment if !ctx.in_reparandum => {
                self.push_span(SpanKind::Reparandum, start, ctx.depth)
            }
            _ => {}
        }
    }

    fn brace(&mut self, kind: SpanKind, open: usize, depth: u32) -> Result<(), ParseError> {
        let start = self.tokens.len();
        loop {
            let Some((offset, lexeme)) = self.peek().cloned() else {
                return Err(ParseError::UnbalancedBracket { offset: open });
            };
            self.pos += 1;
            match lexeme {
                Lexeme::CloseBrace => break,
                Lexeme::Word(text) if text != SILENCE => self.tokens.push(Token {
                    text: text.to_string(),
                    kind: infer_kind(text, [kind]),
                }),
                _ => return Err(ParseError::NestedInBrace { offset }),
            }
        }
        if self.tokens.len() == start {
            return Err(ParseError::EmptyBrace { offset: open });
        }
        self.push_span(kind, start, depth);
        Ok(())
    }

    fn restart(&mut self, open: usize, depth: u32) -> Result<(), ParseError> {
        let start = self.tokens.len();
        let inner = Context {
            depth: depth + 1,
            in_reparandum: true,
        };
        match self.sequence(inner)? {
            Stop::End => return Err(ParseError::UnbalancedBracket { offset: open }),
            Stop::Close(offset) => return Err(ParseError::MissingInterruptionPoint { offset }),
            Stop::Plus(_) => {}
        }
        if self.tokens.len() == start {
            return Err(ParseError::EmptyReparandum { offset: open });
        }
        self.push_span(SpanKind::Reparandum, start, depth);

        // Interregnum: fillers and editing terms right after the `+`.
        while let Some(&(offset, Lexeme::OpenBrace(kind))) = self.peek() {
            if !matches!(kind, SpanKind::Filler | SpanKind::EditingTerm) {
                break;
            }
            self.pos += 1;
            self.brace(kind, offset, depth)?;
        }

        let repair_start = self.tokens.len();
        let inner = Context {
            depth: depth + 1,
            in_reparandum: false,
        };
        match self.sequence(inner)? {
            Stop::End => return Err(ParseError::UnbalancedBracket { offset: open }),
            Stop::Plus(offset) => return Err(ParseError::MisplacedInterruptionPoint { offset }),
            Stop::Close(_) => {}
        }
        if self.tokens.len() > repair_start {
            self.push_span(SpanKind::Repair, repair_start, depth);
        }
        Ok(())
    }
}

/// Parses one utterance of disfluency markup.
///
/// Tokens are whitespace separated and case preserving. A fragment such as
/// `b-` outside any reparandum is read as a deletion restart, so the fluent
/// side of an utterance never contains fragments.
pub fn parse_annotated(markup: &str) -> Result<AnnotatedUtterance, ParseError> {
    let mut parser = Parser {
        lexemes: lex(markup)?,
        pos: 0,
        tokens: Vec::new(),
        spans: Vec::new(),
    };
    let top = Context {
        depth: 0,
        in_reparandum: false,
    };
    match parser.sequence(top)? {
        Stop::End => {}
        Stop::Plus(offset) => return Err(ParseError::MisplacedInterruptionPoint { offset }),
        Stop::Close(offset) => return Err(ParseError::UnbalancedBracket { offset }),
    }
    Ok(AnnotatedUtterance::new(parser.tokens, parser.spans)?)
}

/// Pretty-prints an utterance back into markup.
///
/// Exact inverse of [`parse_annotated`] for every parsed utterance. A repair
/// chained to another repair (only produced by [`super::flatten`]) has no
/// markup form and is written as plain tokens.
pub fn serialize(u: &AnnotatedUtterance) -> String {
    let mut out = Vec::new();
    Printer { u, out: &mut out }.region(0, u.len(), 0);
    out.join(" ")
}

struct Printer<'a, 'o> {
    u: &'a AnnotatedUtterance,
    out: &'o mut Vec<String>,
}

impl Printer<'_, '_> {
    fn span_at(&self, depth: u32, start: usize) -> Option<DisfluencySpan> {
        self.u
            .spans()
            .iter()
            .find(|s| s.depth == depth && s.start == start)
            .copied()
    }

    fn brace(&mut self, span: DisfluencySpan) {
        let tag = match span.kind {
            SpanKind::Filler => 'F',
            SpanKind::EditingTerm => 'E',
            _ => 'D',
        };
        let body: Vec<&str> = self.u.tokens()[span.start..span.end]
            .iter()
            .map(|t| t.text.as_str())
            .collect();
        self.out.push(format!("{{{tag} {}}}", body.join(" ")));
    }

    fn region(&mut self, lo: usize, hi: usize, depth: u32) {
        let mut i = lo;
        while i < hi {
            let Some(span) = self.span_at(depth, i) else {
                self.out.push(self.u.tokens()[i].text.clone());
                i += 1;
                continue;
            };
            match span.kind {
                SpanKind::Filler | SpanKind::EditingTerm | SpanKind::DiscourseMarker => {
                    self.brace(span);
                    i = span.end;
                }
                SpanKind::SilentPause | SpanKind::Repair => {
                    self.region(span.start, span.end, depth + 1);
                    i = span.end;
                }
                SpanKind::Reparandum => {
                    self.out.push("[".into());
                    self.region(span.start, span.end, depth + 1);
                    self.out.push("+".into());
                    i = span.end;
                    while let Some(s) = self.span_at(depth, i).filter(|s| s.end <= hi) {
                        match s.kind {
                            SpanKind::Filler | SpanKind::EditingTerm => self.brace(s),
                            SpanKind::Repair => self.region(s.start, s.end, depth + 1),
                            _ => break,
                        }
                        i = s.end;
                        if s.kind == SpanKind::Repair {
                            break;
                        }
                    }
                    self.out.push("]".into());
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::token_texts;

    fn span(kind: SpanKind, start: usize, end: usize, depth: u32) -> DisfluencySpan {
        DisfluencySpan::new(kind, start, end, depth)
    }

    #[test]
    fn filler_example() {
        let u = parse_annotated("{F uh} I like it").unwrap();
        assert_eq!(u.texts(), ["uh", "I", "like", "it"]);
        assert_eq!(u.spans(), [span(SpanKind::Filler, 0, 1, 0)]);
        assert_eq!(u.tokens()[0].kind, TokenKind::FilledPause);
    }

    #[test]
    fn repair_with_interregnum() {
        let u = parse_annotated("[ I + {F uh} I ] like it").unwrap();
        assert_eq!(
            u.spans(),
            [
                span(SpanKind::Reparandum, 0, 1, 0),
                span(SpanKind::Filler, 1, 2, 0),
                span(SpanKind::Repair, 2, 3, 0),
            ]
        );
    }

    #[test]
    fn fluent_has_no_spans() {
        let u = parse_annotated("I like it").unwrap();
        assert_eq!(u.len(), 3);
        assert!(u.spans().is_empty());
    }

    #[test]
    fn nested_restart() {
        // Hand trace: the inner bracket opens at depth 1 inside the outer
        // reparandum, which closes at the outer `+` after two tokens.
        let u = parse_annotated("[ [ we + we ] + we ] go").unwrap();
        assert_eq!(u.texts(), ["we", "we", "we", "go"]);
        assert_eq!(
            u.spans(),
            [
                span(SpanKind::Reparandum, 0, 2, 0),
                span(SpanKind::Reparandum, 0, 1, 1),
                span(SpanKind::Repair, 1, 2, 1),
                span(SpanKind::Repair, 2, 3, 0),
            ]
        );
    }

    #[test]
    fn deletion_restart() {
        let u = parse_annotated("[ we + ] they left").unwrap();
        assert_eq!(u.spans(), [span(SpanKind::Reparandum, 0, 1, 0)]);
    }

    #[test]
    fn bare_fragment_is_a_restart() {
        let u = parse_annotated("b- birthday <sil> party").unwrap();
        assert_eq!(u.tokens()[0].kind, TokenKind::FalseStartFragment);
        assert_eq!(u.tokens()[2].kind, TokenKind::SilentPause);
        assert_eq!(
            u.spans(),
            [
                span(SpanKind::Reparandum, 0, 1, 0),
                span(SpanKind::SilentPause, 2, 3, 0),
            ]
        );
        assert_eq!(serialize(&u), "[ b- + ] birthday <sil> party");
    }

    #[test]
    fn fragment_inside_reparandum_is_not_rewrapped() {
        let u = parse_annotated("[ th- + they ] went").unwrap();
        assert_eq!(
            u.spans(),
            [
                span(SpanKind::Reparandum, 0, 1, 0),
                span(SpanKind::Repair, 1, 2, 0),
            ]
        );
    }

    #[test]
    fn fragment_inside_repair_is_wrapped_deeper() {
        let u = parse_annotated("[ a + th- b ]").unwrap();
        assert_eq!(
            u.spans(),
            [
                span(SpanKind::Reparandum, 0, 1, 0),
                span(SpanKind::Repair, 1, 3, 0),
                span(SpanKind::Reparandum, 1, 2, 1),
            ]
        );
    }

    #[test]
    fn editing_terms_keep_hyphenated_words() {
        let u = parse_annotated("{E x- ray} scan").unwrap();
        assert_eq!(u.tokens()[0].kind, TokenKind::Word);
    }

    #[test]
    fn attached_closing_brace() {
        let u = parse_annotated("{F uh}{F um} ok").unwrap();
        assert_eq!(u.texts(), ["uh", "um", "ok"]);
        assert_eq!(u.spans().len(), 2);
    }

    #[test]
    fn errors_carry_offsets() {
        assert_eq!(
            parse_annotated("[ I I ] go"),
            Err(ParseError::MissingInterruptionPoint { offset: 6 })
        );
        assert_eq!(
            parse_annotated("go [ I + I"),
            Err(ParseError::UnbalancedBracket { offset: 3 })
        );
        assert_eq!(
            parse_annotated("go ] now"),
            Err(ParseError::UnbalancedBracket { offset: 3 })
        );
        assert_eq!(
            parse_annotated("ok {F } go"),
            Err(ParseError::EmptyBrace { offset: 3 })
        );
        assert_eq!(
            parse_annotated("ok {F}"),
            Err(ParseError::EmptyBrace { offset: 3 })
        );
        assert_eq!(
            parse_annotated("{F uh"),
            Err(ParseError::UnbalancedBracket { offset: 0 })
        );
        assert_eq!(
            parse_annotated("a } b"),
            Err(ParseError::UnbalancedBracket { offset: 2 })
        );
        assert_eq!(
            parse_annotated("{X uh}"),
            Err(ParseError::UnknownBrace { offset: 0 })
        );
        assert_eq!(
            parse_annotated("a + b"),
            Err(ParseError::MisplacedInterruptionPoint { offset: 2 })
        );
        assert_eq!(
            parse_annotated("[ a + b + c ]"),
            Err(ParseError::MisplacedInterruptionPoint { offset: 8 })
        );
        assert_eq!(
            parse_annotated("[ + a ]"),
            Err(ParseError::EmptyReparandum { offset: 0 })
        );
        assert_eq!(
            parse_annotated("{F [ uh }"),
            Err(ParseError::NestedInBrace { offset: 3 })
        );
    }

    #[test]
    fn offsets_are_bytes() {
        // "é" is two bytes
        assert_eq!(
            parse_annotated("é ]"),
            Err(ParseError::UnbalancedBracket { offset: 3 })
        );
    }

    #[test]
    fn serialize_round_trips_fixtures() {
        for markup in [
            "{F uh} I like it",
            "[ I + {F uh} I ] like it",
            "[ [ we + we ] + we ] go",
            "[ we + ] they left",
            "{D well} [ it + {E I mean} {F um} it's ] fine <sil>",
            "[ I + ] {F uh} you",
            "[ {F uh} + ] ok",
            "[ the + [ a + [ an + an ] ] ] apple",
            "innova- innovative",
            "[ x + [ a + ] ] [ {F um} + c ]",
        ] {
            let u = parse_annotated(markup).unwrap();
            let again = parse_annotated(&serialize(&u)).unwrap();
            assert_eq!(u, again, "{markup}");
        }
    }

    #[test]
    fn serialize_is_canonical() {
        let u = parse_annotated("{F uh}   I  go").unwrap();
        assert_eq!(token_texts(u.tokens()), ["uh", "I", "go"]);
        assert_eq!(serialize(&u), "{F uh} I go");
        let u = parse_annotated("[ I + {F uh} I ] like it").unwrap();
        assert_eq!(serialize(&u), "[ I + {F uh} I ] like it");
    }
}
