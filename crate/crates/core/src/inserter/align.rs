use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::Token;

/// Monotone map from fluent token positions to disfluent token positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    map: Vec<usize>,
}

impl Alignment {
    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Disfluent positions left unaligned between consecutive fluent tokens:
    /// entry `b` is the range just before fluent token `b`, entry `n` the tail.
    pub fn gaps(&self, disfluent_len: usize) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::with_capacity(self.map.len() + 1);
        let mut from = 0;
        for &j in &self.map {
            out.push(from..j);
            from = j + 1;
        }
        out.push(from..disfluent_len);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlignError {
    #[error("fluent token {fluent_index} cannot be aligned monotonically")]
    NonMonotonicPair { fluent_index: usize },
}

/// Aligns `fluent` into `disfluent` by token text, mapping every fluent
/// token to its latest feasible occurrence.
///
/// When `fluent` is a subsequence of `disfluent` this is the rightmost of
/// all maximal monotone alignments, so abandoned material (reparanda,
/// fillers) lands before the retained copy. Scanning from the right and
/// taking the last match at every step yields that alignment directly.
pub fn align_pair(fluent: &[Token], disfluent: &[Token]) -> Result<Alignment, AlignError> {
    let mut map = vec![0; fluent.len()];
    let mut limit = disfluent.len();
    for i in (0..fluent.len()).rev() {
        let found = disfluent[..limit]
            .iter()
            .rposition(|t| t.text == fluent[i].text)
            .ok_or(AlignError::NonMonotonicPair { fluent_index: i })?;
        map[i] = found;
        limit = found;
    }
    Ok(Alignment { map })
}
