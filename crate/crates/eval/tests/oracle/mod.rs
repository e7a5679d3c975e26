// SPDX-License-Identifier: Apache-2.0

//! Brute-force metric oracles shared by the metric tests and the workspace
//! acceptance suite.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const VOCAB: [&str; 10] = [
    "the", "adder", "sum", "carry", "bit", "a", "b", "output", ",", ".",
];

pub fn random_tokens(rng: &mut ChaCha8Rng, min: usize, max: usize) -> Vec<String> {
    let len = rng.gen_range(min..=max);
    (0..len)
        .map(|_| VOCAB[rng.gen_range(0..VOCAB.len())].to_string())
        .collect()
}

pub fn ngram_count(tokens: &[String], gram: &[String]) -> usize {
    (0..tokens.len().saturating_sub(gram.len() - 1))
        .filter(|&i| tokens.len() >= gram.len() && tokens[i..i + gram.len()] == *gram)
        .count()
}

pub fn naive_bleu(c: &[String], r: &[String], max_n: usize) -> f64 {
    if c.is_empty() {
        return 0.0;
    }
    let orders = max_n.min(c.len());
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let total = c.len() + 1 - n;
        let mut matched = 0;
        let mut seen: Vec<&[String]> = Vec::new();
        for i in 0..total {
            let g = &c[i..i + n];
            if seen.contains(&g) {
                continue;
            }
            seen.push(g);
            matched += ngram_count(c, g).min(ngram_count(r, g));
        }
        let m = if matched == 0 { 1e-9 } else { matched as f64 };
        log_sum += (m / total as f64).ln();
    }
    let bp = if c.len() > r.len() {
        1.0
    } else {
        (1.0 - r.len() as f64 / c.len() as f64).exp()
    };
    bp * (log_sum / orders as f64).exp()
}

pub fn naive_rouge_n(c: &[String], r: &[String], n: usize) -> (f64, f64, f64) {
    let grams = |t: &[String]| -> Vec<Vec<String>> { t.windows(n).map(|w| w.to_vec()).collect() };
    let (cg, mut rg) = (grams(c), grams(r));
    let (c_total, r_total) = (cg.len(), rg.len());
    let mut overlap = 0;
    for g in &cg {
        if let Some(pos) = rg.iter().position(|x| x == g) {
            rg.remove(pos);
            overlap += 1;
        }
    }
    let (p, rec) = match (c_total, r_total) {
        (0, 0) => (1.0, 1.0),
        (_, 0) => (0.0, 1.0),
        (0, _) => (0.0, 0.0),
        _ => (
            overlap as f64 / c_total as f64,
            overlap as f64 / r_total as f64,
        ),
    };
    let f = if p + rec > 0.0 {
        2.0 * p * rec / (p + rec)
    } else {
        0.0
    };
    (p, rec, f)
}

pub fn is_subsequence(sub: &[&String], of: &[String]) -> bool {
    let mut it = of.iter();
    sub.iter().all(|s| it.any(|x| x == *s))
}

/// Longest common subsequence by enumerating every subsequence of `a`.
pub fn brute_lcs(a: &[String], b: &[String]) -> usize {
    (0u32..1 << a.len())
        .filter_map(|mask| {
            let sub: Vec<&String> = (0..a.len())
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| &a[i])
                .collect();
            is_subsequence(&sub, b).then_some(sub.len())
        })
        .max()
        .unwrap_or(0)
}

pub fn binom(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// pass@k by enumerating every k-subset of n samples whose first c are correct.
pub fn subset_pass_at_k(n: u64, c: u64, k: u64) -> f64 {
    let (mut hit, mut total) = (0u64, 0u64);
    for mask in 0u32..1 << n {
        if mask.count_ones() as u64 != k {
            continue;
        }
        total += 1;
        hit += u64::from(mask & ((1 << c) - 1) != 0);
    }
    assert_eq!(total, binom(n, k));
    hit as f64 / total as f64
}
