// SPDX-License-Identifier: Apache-2.0

//! Metrics against naive recomputations.

mod oracle;

use netreason_eval::passk::pass_at_k;
use netreason_eval::similarity::{cosine, TfIdf};
use netreason_eval::text::{bleu, bleu_tokens, rouge_l_tokens, rouge_n_tokens, tokenize};
use netreason_eval::EvalError;
use oracle::{brute_lcs, naive_bleu, naive_rouge_n, random_tokens, subset_pass_at_k, VOCAB};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

#[test]
fn text_metrics_match_naive_oracles_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..50 {
        let c = random_tokens(&mut rng, 0, 12);
        let r = random_tokens(&mut rng, 1, 12);
        let b = bleu_tokens(&c, &r, 4).unwrap();
        assert!(close(b, naive_bleu(&c, &r, 4)), "case {case}: bleu {b}");
        for n in [1, 2] {
            let got = rouge_n_tokens(&c, &r, n).unwrap();
            let (p, rec, f) = naive_rouge_n(&c, &r, n);
            assert!(
                close(got.precision, p) && close(got.recall, rec) && close(got.f1, f),
                "case {case}: rouge-{n}"
            );
        }
        let l = brute_lcs(&c, &r) as f64;
        let got = rouge_l_tokens(&c, &r).unwrap();
        if c.is_empty() {
            assert_eq!((got.precision, got.recall, got.f1), (0.0, 0.0, 0.0));
        } else {
            let (p, rec) = (l / c.len() as f64, l / r.len() as f64);
            let f = if l > 0.0 {
                2.0 * p * rec / (p + rec)
            } else {
                0.0
            };
            assert!(
                close(got.precision, p) && close(got.recall, rec) && close(got.f1, f),
                "case {case}: rouge-l"
            );
        }
    }
}

#[test]
fn bleu_fixture_by_hand() {
    // Candidate "the cat sat" against "the cat sat on the mat": clipped
    // precisions 3/3, 2/2, 1/1, order 4 dropped; BP = exp(1 - 6/3).
    let b = bleu("the cat sat", "the cat sat on the mat", 4).unwrap();
    assert!(close(b, (-1f64).exp()));
    assert!(close(
        bleu("same words here ok", "same words here ok", 4).unwrap(),
        1.0
    ));
    assert!(bleu("alpha beta gamma delta", "one two three four", 4).unwrap() < 1e-8);
    assert!(matches!(bleu("x", "  ", 4), Err(EvalError::EmptyReference)));
    assert_eq!(tokenize("Sum, Carry."), vec!["sum", ",", "carry", "."]);
}

#[test]
fn pass_at_k_equals_subset_enumeration() {
    for n in 1..=8u64 {
        for c in 0..=n {
            for k in 1..=n {
                let want = subset_pass_at_k(n, c, k);
                let got = pass_at_k(n, c, k).unwrap();
                assert!(
                    (got - want).abs() < 1e-12,
                    "n={n} c={c} k={k}: {got} vs {want}"
                );
            }
        }
    }
    assert_eq!(pass_at_k(5, 2, 1).unwrap(), 0.4);
    assert_eq!(pass_at_k(5, 5, 1).unwrap(), 1.0);
    assert_eq!(pass_at_k(5, 0, 5).unwrap(), 0.0);
    for (n, c, k) in [(5, 6, 1), (5, 2, 0), (5, 2, 6)] {
        assert!(matches!(
            pass_at_k(n, c, k),
            Err(EvalError::InvalidCounts { .. })
        ));
    }
}

#[test]
fn pass_at_k_is_monotonic() {
    for n in 1..=12u64 {
        for k in 1..=n {
            for c in 1..=n {
                assert!(pass_at_k(n, c, k).unwrap() >= pass_at_k(n, c - 1, k).unwrap());
            }
            if k > 1 {
                for c in 0..=n {
                    assert!(pass_at_k(n, c, k).unwrap() >= pass_at_k(n, c, k - 1).unwrap());
                }
            }
        }
    }
    let big = pass_at_k(200, 3, 100).unwrap();
    assert!(big.is_finite() && big > 0.8 && big <= 1.0);
}

fn text_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(VOCAB.to_vec()), 0..15).prop_map(|v| v.join(" "))
}

proptest! {
    #[test]
    fn scores_stay_in_range(a in text_strategy(), b in text_strategy()) {
        prop_assume!(!tokenize(&b).is_empty());
        let s = bleu(&a, &b, 4).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
        for p in [rouge_n_tokens(&tokenize(&a), &tokenize(&b), 1).unwrap(), rouge_n_tokens(&tokenize(&a), &tokenize(&b), 2).unwrap(), rouge_l_tokens(&tokenize(&a), &tokenize(&b)).unwrap()] {
            for x in [p.precision, p.recall, p.f1] {
                prop_assert!((0.0..=1.0).contains(&x));
            }
            if p.precision + p.recall > 0.0 {
                prop_assert!((p.f1 - 2.0 * p.precision * p.recall / (p.precision + p.recall)).abs() < 1e-12);
            }
        }
        let t = TfIdf::fit([a.as_str(), b.as_str()]);
        let sim = t.similarity(&a, &b);
        prop_assert!((-1.0..=1.0).contains(&sim));
        prop_assert!((bleu(&b, &b, 4).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((t.similarity(&b, &b) - 1.0).abs() < 1e-12);
        prop_assert!((rouge_l_tokens(&tokenize(&b), &tokenize(&b)).unwrap().f1 - 1.0).abs() < 1e-12);
    }
}

#[test]
fn cosine_by_hand() {
    assert!(close(
        cosine(&[1.0, 2.0, 2.0], &[2.0, 0.0, 1.0]),
        4.0 / (3.0 * 5f64.sqrt())
    ));
    assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
}
