//! Hashed character n-gram features.
//!
//! Out-of-vocabulary robustness for the linear router comes from bags of
//! character n-grams: each token emits one word-level bucket plus one
//! bucket per character n-gram of its boundary-wrapped form. Buckets are
//! produced by a fixed, documented hash (FNV-1a, 64-bit) masked to a
//! power-of-two table size, so feature extraction is identical across
//! runs, processes, and platforms.

use crate::text::tokenize;

pub const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over the byte sequence: h ^= byte, then h *= prime, starting
/// from the offset basis. No per-process seeding.
pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET_BASIS;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Bucketed n-gram emissions of one document.
#[derive(Debug, Clone, PartialEq)]
pub struct HashedFeatures {
    bucket_count: u32,
    n_min: usize,
    n_max: usize,
    buckets: Vec<u32>,
}

impl HashedFeatures {
    /// Bucket table size B.
    pub fn bucket_count(&self) -> u32 {
        self.bucket_count
    }

    pub fn ngram_range(&self) -> (usize, usize) {
        (self.n_min, self.n_max)
    }

    /// All emitted bucket ids, in emission order: for each token, the
    /// word bucket first, then n-grams by ascending length, left to
    /// right. Repeated buckets are kept (bag semantics).
    pub fn buckets(&self) -> &[u32] {
        &self.buckets
    }

    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }
}

/// Tokenizes `text` and emits hashed buckets per token: one for the bare
/// token bytes (word level), plus one per character n-gram of each length
/// in [n_min, n_max] over the boundary-wrapped form `<token>`.
///
/// The word bucket hashes the bare bytes, not the wrapped form, so a
/// short token never collides with its own full-width n-gram by
/// construction. n-grams are windows of Unicode scalar values, hashed as
/// their UTF-8 bytes.
pub fn hash_ngrams(text: &str, bucket_count: u32, n_min: usize, n_max: usize) -> HashedFeatures {
    assert!(
        bucket_count.is_power_of_two(),
        "bucket count must be a power of two, got {bucket_count}"
    );
    assert!(
        1 <= n_min && n_min <= n_max,
        "invalid n-gram range [{n_min}, {n_max}]"
    );
    let mask = u64::from(bucket_count - 1);
    let mut buckets = Vec::new();
    for token in tokenize(text) {
        buckets.push((fnv1a_64(token.as_bytes()) & mask) as u32);
        let wrapped = format!("<{token}>");
        // Char boundary offsets, including the end, so windows of n chars
        // become byte slices without per-n-gram allocation.
        let bounds: Vec<usize> = wrapped
            .char_indices()
            .map(|(i, _)| i)
            .chain([wrapped.len()])
            .collect();
        let n_chars = bounds.len() - 1;
        for n in n_min..=n_max {
            if n > n_chars {
                break;
            }
            for start in 0..=(n_chars - n) {
                let gram = &wrapped.as_bytes()[bounds[start]..bounds[start + n]];
                buckets.push((fnv1a_64(gram) & mask) as u32);
            }
        }
    }
    HashedFeatures { bucket_count, n_min, n_max, buckets }
}

#[cfg(test)]
mod tests {
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn fnv1a_reference_vectors() {
        // Published FNV-1a 64-bit test vectors.
        assert_eq!(fnv1a_64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a_64(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a_64(b"foobar"), 0x8594_4171_f739_67e8);
    }

    #[test]
    fn short_token_emits_word_bucket_plus_ngrams() {
        // "ab" wrapped as "<ab>" has 3-grams "<ab" and "ab>"; with the
        // word bucket that is 3 emissions.
        let f = hash_ngrams("ab", 1 << 10, 3, 3);
        assert_eq!(f.len(), 3);
        let mask = (1u64 << 10) - 1;
        assert_eq!(f.buckets()[0], (fnv1a_64(b"ab") & mask) as u32);
        assert_eq!(f.buckets()[1], (fnv1a_64(b"<ab") & mask) as u32);
        assert_eq!(f.buckets()[2], (fnv1a_64(b"ab>") & mask) as u32);
    }

    #[test]
    fn ngram_count_matches_enumeration() {
        // Token of c chars wrapped to c+2; each length n contributes
        // c+3-n windows when it fits.
        for (text, n_min, n_max) in [("health", 3, 6), ("ab", 3, 6), ("a", 2, 3)] {
            let f = hash_ngrams(text, 1 << 8, n_min, n_max);
            let c = text.chars().count() + 2;
            let windows: usize = (n_min..=n_max)
                .map(|n| if n <= c { c - n + 1 } else { 0 })
                .sum();
            assert_eq!(f.len(), 1 + windows, "count mismatch for {text:?}");
        }
    }

    #[test]
    fn hashing_is_deterministic() {
        let a = hash_ngrams("Closing costs on a mortgage?", 1 << 21, 3, 6);
        let b = hash_ngrams("Closing costs on a mortgage?", 1 << 21, 3, 6);
        assert_eq!(a, b);
        assert!(!a.is_empty());
    }

    #[test]
    fn multibyte_tokens_hash_whole_chars() {
        // Cyrillic chars are two UTF-8 bytes; windows must stay on char
        // boundaries and still land under the mask.
        let f = hash_ngrams("право закон", 1 << 4, 3, 6);
        assert!(!f.is_empty());
        assert!(f.buckets().iter().all(|&b| b < (1 << 4)));
    }

    #[test]
    fn all_buckets_stay_below_table_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pool: Vec<char> = ('a'..='z')
            .chain('0'..='9')
            .chain(['é', 'ß', 'ц', '語', '-', ' ', '?'])
            .collect();
        for _ in 0..10_000 {
            let len = rng.random_range(0..24);
            let s: String = (0..len).map(|_| pool[rng.random_range(0..pool.len())]).collect();
            for b in [2u32, 1 << 10, 1 << 21] {
                let f = hash_ngrams(&s, b, 3, 6);
                assert!(f.buckets().iter().all(|&id| id < b), "bucket escaped table for {s:?}");
            }
        }
    }
}
