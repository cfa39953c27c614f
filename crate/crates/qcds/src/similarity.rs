//! Ratcliff-Obershelp (gestalt) sequence similarity.
//!
//! Ratio is `2M / (|a| + |b|)` where `M` counts matched elements: the longest
//! matching block, plus recursively the matches on either side of it. Ties
//! between equal-length blocks go to the lowest start in `a`, then in `b`.

/// Longest matching block of `a[a_lo..a_hi]` vs `b[b_lo..b_hi]`.
///
/// Returns (start_a, start_b, length). Uses the rolling-row dynamic program
/// over positions of `b`.
fn longest_match<T: PartialEq>(
    a: &[T],
    b: &[T],
    a_lo: usize,
    a_hi: usize,
    b_lo: usize,
    b_hi: usize,
) -> (usize, usize, usize) {
    let (mut best_i, mut best_j, mut best_len) = (a_lo, b_lo, 0);
    // lengths[j] = length of the common suffix ending at (i-1, j-1)
    let mut lengths = vec![0usize; b_hi - b_lo + 1];
    for i in a_lo..a_hi {
        let mut prev = 0;
        for j in b_lo..b_hi {
            let cur = lengths[j - b_lo + 1];
            if a[i] == b[j] {
                let len = prev + 1;
                lengths[j - b_lo + 1] = len;
                if len > best_len {
                    best_len = len;
                    best_i = i + 1 - len;
                    best_j = j + 1 - len;
                }
            } else {
                lengths[j - b_lo + 1] = 0;
            }
            prev = cur;
        }
        lengths[0] = 0;
    }
    (best_i, best_j, best_len)
}

/// Total number of matched elements between `a` and `b`.
pub fn matching_elements<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    // explicit stack of (a_lo, a_hi, b_lo, b_hi) regions
    let mut total = 0;
    let mut stack = vec![(0, a.len(), 0, b.len())];
    while let Some((a_lo, a_hi, b_lo, b_hi)) = stack.pop() {
        if a_lo >= a_hi || b_lo >= b_hi {
            continue;
        }
        let (i, j, len) = longest_match(a, b, a_lo, a_hi, b_lo, b_hi);
        if len == 0 {
            continue;
        }
        total += len;
        stack.push((a_lo, i, b_lo, j));
        stack.push((i + len, a_hi, j + len, b_hi));
    }
    total
}

/// Similarity ratio in [0, 1]; empty-vs-empty is defined as 1.
pub fn ratio<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    2.0 * matching_elements(a, b) as f64 / (a.len() + b.len()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // independent oracle: direct recursive transcription of the definition,
    // with the longest block found by naive pairwise extension
    fn oracle_longest<T: PartialEq>(a: &[T], b: &[T]) -> (usize, usize, usize) {
        let (mut bi, mut bj, mut blen) = (0, 0, 0);
        for i in 0..a.len() {
            for j in 0..b.len() {
                let mut k = 0;
                while i + k < a.len() && j + k < b.len() && a[i + k] == b[j + k] {
                    k += 1;
                }
                if k > blen {
                    bi = i;
                    bj = j;
                    blen = k;
                }
            }
        }
        (bi, bj, blen)
    }

    fn oracle_matches<T: PartialEq>(a: &[T], b: &[T]) -> usize {
        if a.is_empty() || b.is_empty() {
            return 0;
        }
        let (i, j, len) = oracle_longest(a, b);
        if len == 0 {
            return 0;
        }
        len + oracle_matches(&a[..i], &b[..j]) + oracle_matches(&a[i + len..], &b[j + len..])
    }

    pub fn oracle_ratio<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
        if a.is_empty() && b.is_empty() {
            return 1.0;
        }
        2.0 * oracle_matches(a, b) as f64 / (a.len() + b.len()) as f64
    }

    #[test]
    fn identical_sequences() {
        let a: Vec<u8> = b"abcdef".to_vec();
        assert_eq!(ratio(&a, &a), 1.0);
    }

    #[test]
    fn disjoint_sequences() {
        assert_eq!(ratio(b"aaa".as_slice(), b"bbb".as_slice()), 0.0);
    }

    #[test]
    fn abc_vs_abd() {
        // longest block "ab" (2), nothing left to match
        let r = ratio(b"abc".as_slice(), b"abd".as_slice());
        assert!((r - 2.0 * 2.0 / 6.0).abs() < 1e-15);
        assert_eq!(r, oracle_ratio(b"abc".as_slice(), b"abd".as_slice()));
    }

    #[test]
    fn matches_oracle_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let la = rng.gen_range(0..30);
            let lb = rng.gen_range(0..30);
            let a: Vec<u8> = (0..la).map(|_| rng.gen_range(b'a'..b'f')).collect();
            let b: Vec<u8> = (0..lb).map(|_| rng.gen_range(b'a'..b'f')).collect();
            assert_eq!(
                ratio(&a, &b),
                oracle_ratio(&a, &b),
                "mismatch on {:?} vs {:?}",
                a,
                b
            );
        }
    }
}
