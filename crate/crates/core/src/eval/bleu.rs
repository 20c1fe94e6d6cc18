use std::collections::HashMap;
use std::hash::Hash;

use super::EvalError;

pub const DEFAULT_MAX_N: usize = 4;

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Corpus BLEU with one reference per hypothesis and no smoothing.
///
/// Clipped n-gram matches and hypothesis n-gram totals are summed over the
/// corpus for each order `1..=max_n`. An order with no hypothesis n-grams at
/// all (every hypothesis shorter than `n`) has no defined precision and is
/// left out of the geometric mean; any other order with zero matches makes
/// the score 0. The brevity penalty is `exp(min(0, 1 - r/c))`.
pub fn corpus_bleu<T: Eq + Hash>(
    hypotheses: &[Vec<T>],
    references: &[Vec<T>],
    max_n: usize,
) -> Result<f64, EvalError> {
    if hypotheses.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            left: hypotheses.len(),
            right: references.len(),
        });
    }
    if hypotheses.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if max_n == 0 {
        return Err(EvalError::InvalidArgument(
            "max_n must be at least 1".into(),
        ));
    }
    let hyp_len: usize = hypotheses.iter().map(Vec::len).sum();
    let ref_len: usize = references.iter().map(Vec::len).sum();
    if hyp_len == 0 {
        return Ok(if ref_len == 0 { 1.0 } else { 0.0 });
    }

    let mut log_sum = 0.0;
    let mut orders = 0;
    for n in 1..=max_n {
        let mut matched = 0;
        let mut total = 0;
        for (h, r) in hypotheses.iter().zip(references) {
            let hc = ngram_counts(h, n);
            let rc = ngram_counts(r, n);
            total += h.len().saturating_sub(n - 1);
            matched += hc
                .iter()
                .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
        if total == 0 {
            continue;
        }
        if matched == 0 {
            return Ok(0.0);
        }
        log_sum += (matched as f64 / total as f64).ln();
        orders += 1;
    }
    let bp = (1.0 - ref_len as f64 / hyp_len as f64).min(0.0).exp();
    Ok(bp * (log_sum / orders as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    /// Counts every n-gram by explicit enumeration, without hashing.
    fn oracle(hyps: &[Vec<u8>], refs: &[Vec<u8>], max_n: usize) -> f64 {
        let grams = |s: &[u8], n: usize| -> Vec<Vec<u8>> {
            if s.len() < n {
                return vec![];
            }
            (0..=s.len() - n).map(|i| s[i..i + n].to_vec()).collect()
        };
        let c: usize = hyps.iter().map(Vec::len).sum();
        let r: usize = refs.iter().map(Vec::len).sum();
        if c == 0 {
            return if r == 0 { 1.0 } else { 0.0 };
        }
        let mut logs = vec![];
        for n in 1..=max_n {
            let (mut m, mut t) = (0usize, 0usize);
            for (h, rf) in hyps.iter().zip(refs) {
                let hg = grams(h, n);
                let rg = grams(rf, n);
                t += hg.len();
                let mut done: Vec<&Vec<u8>> = vec![];
                for g in &hg {
                    if done.contains(&g) {
                        continue;
                    }
                    done.push(g);
                    let in_h = hg.iter().filter(|x| *x == g).count();
                    let in_r = rg.iter().filter(|x| *x == g).count();
                    m += in_h.min(in_r);
                }
            }
            if t == 0 {
                continue;
            }
            if m == 0 {
                return 0.0;
            }
            logs.push((m as f64 / t as f64).ln());
        }
        let bp = if c >= r {
            1.0
        } else {
            (1.0 - r as f64 / c as f64).exp()
        };
        bp * (logs.iter().sum::<f64>() / logs.len() as f64).exp()
    }

    #[test]
    fn identity() {
        let h = vec![toks("the cat sat on the mat"), toks("a b")];
        assert_eq!(corpus_bleu(&h, &h, 4).unwrap(), 1.0);
    }

    #[test]
    fn brevity_penalty_case() {
        let b = corpus_bleu(&[toks("a b c d")], &[toks("a b c d e")], 4).unwrap();
        assert!((b - 0.778801).abs() < 1e-6);
        assert!((b - (-0.25f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn disjoint() {
        assert_eq!(
            corpus_bleu(&[toks("a b c")], &[toks("x y z")], 4).unwrap(),
            0.0
        );
    }

    #[test]
    fn clipping() {
        // "the the the" against "the cat": unigram precision 1/3, bigrams 0.
        let b = corpus_bleu(&[toks("the the the")], &[toks("the cat")], 1).unwrap();
        assert!((b - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let e: Vec<Vec<&str>> = vec![];
        assert!(matches!(corpus_bleu(&e, &e, 4), Err(EvalError::EmptyInput)));
        assert!(matches!(
            corpus_bleu(&[toks("a")], &[], 4),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    fn corpus() -> impl Strategy<Value = (Vec<Vec<u8>>, Vec<Vec<u8>>)> {
        (1usize..6).prop_flat_map(|len| {
            let sent = || proptest::collection::vec(0u8..4, 0..=6);
            (
                proptest::collection::vec(sent(), len),
                proptest::collection::vec(sent(), len),
            )
        })
    }

    proptest! {
        #[test]
        fn matches_oracle((h, r) in corpus(), max_n in 1usize..5) {
            let got = corpus_bleu(&h, &r, max_n).unwrap();
            prop_assert!((got - oracle(&h, &r, max_n)).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&got));
        }

        #[test]
        fn renaming_invariant((h, r) in corpus(), shift in 1u8..50) {
            let rename = |c: &Vec<Vec<u8>>| -> Vec<Vec<u8>> {
                c.iter().map(|s| s.iter().map(|x| x * 3 + shift).collect()).collect()
            };
            let a = corpus_bleu(&h, &r, 4).unwrap();
            let b = corpus_bleu(&rename(&h), &rename(&r), 4).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn one_iff_equal((h, r) in corpus()) {
            // Sentences are at most 6 tokens but equal 4-gram multisets of
            // length-6 permutations are possible, so compare at length <= 5.
            let h: Vec<Vec<u8>> = h.into_iter().map(|mut s| { s.truncate(5); s }).collect();
            let r: Vec<Vec<u8>> = r.into_iter().map(|mut s| { s.truncate(5); s }).collect();
            let b = corpus_bleu(&h, &r, 4).unwrap();
            prop_assert_eq!(b == 1.0, h == r);
        }
    }
}
