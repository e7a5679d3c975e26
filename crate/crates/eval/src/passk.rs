// SPDX-License-Identifier: Apache-2.0

use crate::error::{EvalError, Result};

fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // exact at every step: acc * (n - i) is divisible by (i + 1)
        acc = acc.checked_mul(u128::from(n - i))? / u128::from(i + 1);
    }
    Some(acc)
}

/// Probability that at least one of `k` draws without replacement from `n`
/// samples, `c` of them correct, is correct: `1 - C(n-c, k) / C(n, k)`.
///
/// Exact integer binomials are used while they fit in 128 bits, otherwise the
/// product form `1 - prod_{i=n-c+1}^{n} (1 - k/i)`.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64> {
    if c > n || k == 0 || k > n {
        return Err(EvalError::InvalidCounts { n, c, k });
    }
    if n - c < k {
        return Ok(1.0);
    }
    if let (Some(total), Some(fail)) = (binomial(n, k), binomial(n - c, k)) {
        return Ok((total - fail) as f64 / total as f64);
    }
    let prod: f64 = ((n - c + 1)..=n)
        .map(|i| 1.0 - k as f64 / i as f64)
        .product();
    Ok(1.0 - prod)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert_eq!(pass_at_k(5, 5, 1).unwrap(), 1.0);
        assert_eq!(pass_at_k(5, 0, 5).unwrap(), 0.0);
        assert_eq!(pass_at_k(5, 2, 1).unwrap(), 0.4);
        assert_eq!(binomial(10, 3), Some(120));
        assert!(pass_at_k(5, 6, 1).is_err());
        assert!(pass_at_k(5, 1, 0).is_err());
        assert!(pass_at_k(5, 1, 6).is_err());
    }

    #[test]
    fn large_n_falls_back() {
        let p = pass_at_k(400, 3, 200).unwrap();
        let direct = 1.0 - (398..=400).map(|i| 1.0 - 200.0 / i as f64).product::<f64>();
        assert!((p - direct).abs() < 1e-12);
    }
}
