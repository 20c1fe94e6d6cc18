//! Plain-text rendering for speech synthesis, and JSONL export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{AnnotatedUtterance, TokenKind};
use crate::corpus::jsonl_line;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderStyle {
    /// Surface form written for each `<sil>`.
    pub silent_pause_surface: String,
    pub keep_filler_tokens: bool,
    /// Keep the trailing hyphen of fragments (`b-`).
    pub fragment_hyphen: bool,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            silent_pause_surface: "...".to_string(),
            keep_filler_tokens: true,
            fragment_hyphen: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("silent pause surface must be non-empty")]
    EmptyPauseSurface,
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl RenderStyle {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.silent_pause_surface.trim().is_empty() {
            return Err(RenderError::EmptyPauseSurface);
        }
        Ok(())
    }
}

/// Space-joined surface text. An invalid style falls back to the default
/// pause surface.
pub fn render_tts(u: &AnnotatedUtterance, style: &RenderStyle) -> String {
    let pause = if style.validate().is_ok() {
        style.silent_pause_surface.as_str()
    } else {
        "..."
    };
    let mut out: Vec<&str> = Vec::with_capacity(u.len());
    for t in u.tokens() {
        match t.kind {
            TokenKind::SilentPause => out.push(pause),
            TokenKind::FilledPause if !style.keep_filler_tokens => {}
            TokenKind::FalseStartFragment if !style.fragment_hyphen => {
                out.push(t.text.strip_suffix('-').unwrap_or(&t.text))
            }
            _ => out.push(&t.text),
        }
    }
    out.join(" ")
}

/// Writes one JSONL record per utterance, LF-terminated.
pub fn export_jsonl(utterances: &[AnnotatedUtterance], path: &Path) -> Result<(), RenderError> {
    let io = |source| RenderError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for u in utterances {
        w.write_all(jsonl_line(u).as_bytes()).map_err(io)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}
