// SPDX-License-Identifier: Apache-2.0

//! Token-overlap metrics: BLEU, ROUGE-N and ROUGE-L.
//!
//! Texts are lowercased and split on whitespace; inside each chunk, runs of
//! alphanumerics and `_` form one token and every other character is a token
//! of its own.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};

/// Replacement for zero clipped n-gram counts.
pub const BLEU_EPSILON: f64 = 1e-9;

pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for c in chunk.chars().flat_map(char::to_lowercase) {
            if c.is_alphanumeric() || c == '_' {
                word.push(c);
            } else {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(c.to_string());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

fn clipped_overlap(cand: &[String], reference: &[String], n: usize) -> (usize, usize, usize) {
    let c = ngram_counts(cand, n);
    let r = ngram_counts(reference, n);
    let overlap = c
        .iter()
        .map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    let total = |t: &[String]| (t.len() + 1).saturating_sub(n);
    (overlap, total(cand), total(reference))
}

/// Sentence BLEU over orders `1..=max_n`.
///
/// Orders longer than the candidate are left out of the geometric mean; an
/// empty candidate scores 0.
pub fn bleu(candidate: &str, reference: &str, max_n: usize) -> Result<f64> {
    bleu_tokens(&tokenize(candidate), &tokenize(reference), max_n)
}

pub fn bleu_tokens(cand: &[String], reference: &[String], max_n: usize) -> Result<f64> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    if cand.is_empty() {
        return Ok(0.0);
    }
    let orders = max_n.max(1).min(cand.len());
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let (overlap, total, _) = clipped_overlap(cand, reference, n);
        let num = if overlap == 0 {
            BLEU_EPSILON
        } else {
            overlap as f64
        };
        log_sum += (num / total as f64).ln();
    }
    let (c, r) = (cand.len() as f64, reference.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    Ok(bp * (log_sum / orders as f64).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }

    pub fn identity() -> Self {
        Prf::new(1.0, 1.0)
    }
}

/// ROUGE-N precision, recall and F1.
///
/// When neither side has an n-gram the score is (1, 1, 1); when only the
/// reference lacks n-grams it is (0, 1, 0).
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> Result<Prf> {
    rouge_n_tokens(&tokenize(candidate), &tokenize(reference), n)
}

pub fn rouge_n_tokens(cand: &[String], reference: &[String], n: usize) -> Result<Prf> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let (overlap, c, r) = clipped_overlap(cand, reference, n);
    Ok(match (c, r) {
        (0, 0) => Prf::identity(),
        (_, 0) => Prf::new(0.0, 1.0),
        (0, _) => Prf::new(0.0, 0.0),
        _ => Prf::new(overlap as f64 / c as f64, overlap as f64 / r as f64),
    })
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l(candidate: &str, reference: &str) -> Result<Prf> {
    rouge_l_tokens(&tokenize(candidate), &tokenize(reference))
}

pub fn rouge_l_tokens(cand: &[String], reference: &[String]) -> Result<Prf> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    if cand.is_empty() {
        return Ok(Prf::default());
    }
    let l = lcs_len(cand, reference) as f64;
    Ok(Prf::new(l / cand.len() as f64, l / reference.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(
            tokenize("Sum = A+B; done."),
            vec!["sum", "=", "a", "+", "b", ";", "done", "."]
        );
        assert!(tokenize("  \n\t").is_empty());
    }

    #[test]
    fn bleu_fixture() {
        // orders 1..3 match fully, order 4 exceeds the candidate
        let b = bleu("the cat sat", "the cat sat on the mat", 4).unwrap();
        assert!((b - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(bleu("a b c d e", "a b c d e", 4).unwrap(), 1.0);
        assert!(bleu("x y z", "a b c", 4).unwrap() < 1e-8);
        assert!(matches!(bleu("a", "", 4), Err(EvalError::EmptyReference)));
        assert_eq!(bleu("", "a", 4).unwrap(), 0.0);
    }

    #[test]
    fn rouge_subset() {
        let r = rouge_n("the cat", "the cat sat", 1).unwrap();
        assert_eq!(r.precision, 1.0);
        assert!((r.recall - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(rouge_n("a", "a", 2).unwrap(), Prf::identity());
        let l = rouge_l("a x b y c", "a b c").unwrap();
        assert_eq!(l.recall, 1.0);
        assert!((l.precision - 0.6).abs() < 1e-15);
    }
}
