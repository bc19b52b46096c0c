//! Deterministic text pipeline.
//!
//! Tokenization, vocabulary construction with document-frequency
//! statistics, smoothed IDF, sparse TF-IDF vectors, and (in [`hash`])
//! hashed character n-gram features. Everything here is pure and
//! reproducible across runs and platforms: no randomized hashing, no
//! locale-dependent behavior.

pub mod hash;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum TextError {
    #[error("cannot build a vocabulary from an empty training corpus")]
    EmptyCorpus,
    #[error("feature id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: usize, size: usize },
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
}

/// Lowercases and splits on maximal runs of non-alphanumeric code points.
/// Empty input yields an empty list. Idempotent on its own output joined
/// by single spaces.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Token set of a training corpus with per-token document frequencies.
///
/// Ids are dense and 0-based, assigned in order of descending document
/// frequency with lexicographic tie-break, so construction is fully
/// deterministic. Immutable after build; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    ids: HashMap<String, u32>,
    tokens: Vec<String>,
    df: Vec<u32>,
    n_docs: usize,
    idf: Vec<f64>,
}

impl Vocabulary {
    /// Rebuilds a vocabulary from its serialized parts, revalidating the
    /// invariants (dense ids follow from the token order; df in [1, N]).
    pub fn from_parts(
        tokens: Vec<String>,
        df: Vec<u32>,
        n_docs: usize,
    ) -> Result<Self, TextError> {
        if n_docs == 0 {
            return Err(TextError::InvalidVocabulary(
                "document count must be positive".into(),
            ));
        }
        if tokens.len() != df.len() {
            return Err(TextError::InvalidVocabulary(format!(
                "{} tokens but {} document frequencies",
                tokens.len(),
                df.len()
            )));
        }
        if tokens.len() > u32::MAX as usize {
            return Err(TextError::InvalidVocabulary("vocabulary too large".into()));
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (id, token) in tokens.iter().enumerate() {
            if ids.insert(token.clone(), id as u32).is_some() {
                return Err(TextError::InvalidVocabulary(format!(
                    "duplicate token {token:?}"
                )));
            }
        }
        for (id, &d) in df.iter().enumerate() {
            if d == 0 || d as usize > n_docs {
                return Err(TextError::InvalidVocabulary(format!(
                    "df({id}) = {d} outside [1, {n_docs}]"
                )));
            }
        }
        let idf = df.iter().map(|&d| smoothed_idf(n_docs, d)).collect();
        Ok(Self { ids, tokens, df, n_docs, idf })
    }

    /// Number of tokens V; ids are exactly 0..V.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of training documents N.
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Tokens in id order, for serialization.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Document frequencies in id order, for serialization.
    pub fn document_frequencies(&self) -> &[u32] {
        &self.df
    }

    pub fn df(&self, id: u32) -> Result<u32, TextError> {
        self.df
            .get(id as usize)
            .copied()
            .ok_or(TextError::IdOutOfRange { id: id as usize, size: self.len() })
    }

    /// Smoothed inverse document frequency, ln((1+N)/(1+df)) + 1.
    /// Strictly positive; non-increasing in df for fixed N.
    pub fn idf(&self, id: u32) -> Result<f64, TextError> {
        self.idf
            .get(id as usize)
            .copied()
            .ok_or(TextError::IdOutOfRange { id: id as usize, size: self.len() })
    }

    /// Precomputed IDF per id, for hot loops that already hold valid ids.
    pub fn idf_values(&self) -> &[f64] {
        &self.idf
    }
}

fn smoothed_idf(n_docs: usize, df: u32) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

/// Builds a vocabulary over the given training documents: keeps tokens
/// with document frequency ≥ `min_df`, truncated to `max_size` by
/// descending df with lexicographic tie-break.
pub fn build_vocabulary<'a, I>(
    docs: I,
    min_df: u32,
    max_size: usize,
) -> Result<Vocabulary, TextError>
where
    I: IntoIterator<Item = &'a str>,
{
    assert!(min_df >= 1, "min_df must be at least 1");
    assert!(max_size >= 1, "max_size must be at least 1");
    let mut df_by_token: BTreeMap<String, u32> = BTreeMap::new();
    let mut n_docs = 0usize;
    for doc in docs {
        n_docs += 1;
        let distinct: BTreeSet<String> = tokenize(doc).into_iter().collect();
        for token in distinct {
            *df_by_token.entry(token).or_insert(0) += 1;
        }
    }
    if n_docs == 0 {
        return Err(TextError::EmptyCorpus);
    }
    let mut entries: Vec<(String, u32)> = df_by_token
        .into_iter()
        .filter(|&(_, d)| d >= min_df)
        .collect();
    // BTreeMap iteration is already lexicographic, so a stable sort by
    // descending df alone yields the (df desc, token asc) order.
    entries.sort_by(|a, b| b.1.cmp(&a.1));
    entries.truncate(max_size);
    let (tokens, df): (Vec<String>, Vec<u32>) = entries.into_iter().unzip();
    Vocabulary::from_parts(tokens, df, n_docs)
}

/// Sparse feature vector: (id, weight) pairs with strictly increasing ids
/// and finite weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector<S> {
    entries: Vec<(u32, S)>,
}

impl<S: Scalar> SparseVector<S> {
    pub fn new(entries: Vec<(u32, S)>) -> Self {
        debug_assert!(
            entries.windows(2).all(|w| w[0].0 < w[1].0),
            "sparse ids must be strictly increasing"
        );
        debug_assert!(entries.iter().all(|&(_, w)| w.is_finite()));
        Self { entries }
    }

    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn entries(&self) -> &[(u32, S)] {
        &self.entries
    }

    /// Number of nonzero entries (L0).
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// TF-IDF vector of a document: weight(id) = count(token) · idf(id).
/// Out-of-vocabulary tokens are dropped.
pub fn vectorize_tfidf<S: Scalar>(vocab: &Vocabulary, text: &str) -> SparseVector<S> {
    let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
    for token in tokenize(text) {
        if let Some(id) = vocab.id(&token) {
            *counts.entry(id).or_insert(0) += 1;
        }
    }
    let idf = vocab.idf_values();
    let entries = counts
        .into_iter()
        .map(|(id, count)| {
            (id, S::from_f64_lossy(count as f64 * idf[id as usize]))
        })
        .collect();
    SparseVector::new(entries)
}

#[cfg(test)]
mod tests {
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn tokenize_splits_on_nonalphanumeric_runs() {
        assert_eq!(tokenize("What is a 401(k)?"), ["what", "is", "a", "401", "k"]);
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(tokenize("Право  и закон"), ["право", "и", "закон"]);
        assert_eq!(tokenize("--- \t\n ---"), Vec::<String>::new());
    }

    #[test]
    fn tokenize_is_idempotent_on_rejoined_output() {
        let samples = [
            "What is a 401(k)?",
            "Право и закон",
            "a--b__c  d1e",
            "ΣΊΣΥΦΟΣ rolls; the stone: uphill!",
        ];
        for s in samples {
            let once = tokenize(s);
            let again = tokenize(&once.join(" "));
            assert_eq!(once, again, "not idempotent on {s:?}");
        }
    }

    #[test]
    fn vocabulary_applies_min_df() {
        let v = build_vocabulary(["a b", "a c"], 2, 100).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.id("a"), Some(0));
        assert_eq!(v.df(0), Ok(2));
        assert_eq!(v.n_docs(), 2);
        assert_eq!(v.id("b"), None);
    }

    #[test]
    fn vocabulary_truncates_with_lexicographic_tie_break() {
        let v = build_vocabulary(["a b c"], 1, 2).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.id("a"), Some(0));
        assert_eq!(v.id("b"), Some(1));
        assert_eq!(v.id("c"), None);
    }

    #[test]
    fn vocabulary_orders_ids_by_descending_df_then_token() {
        let v = build_vocabulary(["b c", "b c", "b a"], 1, 100).unwrap();
        // df: b=3, c=2, a=1
        assert_eq!(v.token(0), Some("b"));
        assert_eq!(v.token(1), Some("c"));
        assert_eq!(v.token(2), Some("a"));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert_eq!(build_vocabulary([], 1, 10), Err(TextError::EmptyCorpus));
    }

    fn random_corpus(rng: &mut ChaCha8Rng, n_docs: usize) -> Vec<String> {
        let alphabet = ["apple", "bond", "court", "dose", "equity", "fever", "gavel"];
        (0..n_docs)
            .map(|_| {
                let len = rng.random_range(0..12);
                (0..len)
                    .map(|_| alphabet[rng.random_range(0..alphabet.len())])
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect()
    }

    #[test]
    fn document_frequencies_match_brute_force_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let docs = random_corpus(&mut rng, 60);
        let v = build_vocabulary(docs.iter().map(String::as_str), 1, 1000).unwrap();
        for id in 0..v.len() as u32 {
            let token = v.token(id).unwrap();
            let recount = docs
                .iter()
                .filter(|d| tokenize(d).iter().any(|t| t == token))
                .count() as u32;
            assert_eq!(v.df(id), Ok(recount), "df mismatch for {token:?}");
        }
    }

    #[test]
    fn idf_matches_closed_form() {
        let v = build_vocabulary(["a b", "a c"], 1, 100).unwrap();
        // df(a) = N = 2 ⇒ idf exactly 1.
        assert_eq!(v.idf(v.id("a").unwrap()), Ok(1.0));

        let v9 = Vocabulary::from_parts(vec!["rare".into()], vec![1], 9).unwrap();
        let expected = (10.0f64 / 2.0).ln() + 1.0;
        assert!((v9.idf(0).unwrap() - expected).abs() < 1e-12);
        assert!((v9.idf(0).unwrap() - 2.60944).abs() < 1e-5);
    }

    #[test]
    fn idf_is_nonincreasing_in_df_and_positive() {
        let n = 37;
        let tokens: Vec<String> = (1..=n).map(|d| format!("t{d:02}")).collect();
        let df: Vec<u32> = (1..=n as u32).collect();
        let v = Vocabulary::from_parts(tokens, df, n).unwrap();
        let mut prev = f64::INFINITY;
        for id in 0..n as u32 {
            let idf = v.idf(id).unwrap();
            assert!(idf > 0.0);
            assert!(idf <= prev, "idf increased at df={}", id + 1);
            prev = idf;
        }
        // df = N gives the floor value 1.
        assert_eq!(v.idf(n as u32 - 1), Ok(1.0));
    }

    #[test]
    fn idf_rejects_out_of_range_id() {
        let v = build_vocabulary(["a b", "a c"], 2, 100).unwrap();
        assert_eq!(v.idf(7), Err(TextError::IdOutOfRange { id: 7, size: 1 }));
    }

    #[test]
    fn from_parts_revalidates_invariants() {
        assert!(Vocabulary::from_parts(vec!["a".into(), "a".into()], vec![1, 1], 2).is_err());
        assert!(Vocabulary::from_parts(vec!["a".into()], vec![3], 2).is_err());
        assert!(Vocabulary::from_parts(vec!["a".into()], vec![0], 2).is_err());
        assert!(Vocabulary::from_parts(vec!["a".into()], vec![1], 0).is_err());
    }

    #[test]
    fn tfidf_weights_counts_by_idf() {
        let v = build_vocabulary(["a b", "a c"], 2, 100).unwrap();
        let x: SparseVector<f64> = vectorize_tfidf(&v, "a a b");
        assert_eq!(x.entries(), &[(0, 2.0)]);
    }

    #[test]
    fn tfidf_of_fully_oov_text_is_empty() {
        let v = build_vocabulary(["a b", "a c"], 2, 100).unwrap();
        let x: SparseVector<f64> = vectorize_tfidf(&v, "x y z");
        assert!(x.is_empty());
    }

    #[test]
    fn tfidf_matches_dense_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let docs = random_corpus(&mut rng, 40);
        let v = build_vocabulary(docs.iter().map(String::as_str), 1, 1000).unwrap();
        for doc in docs.iter().chain([&"court gavel court UNKNOWN".to_string()]) {
            let x: SparseVector<f64> = vectorize_tfidf(&v, doc);
            let toks = tokenize(doc);
            let mut dense = vec![0.0f64; v.len()];
            for id in 0..v.len() as u32 {
                let token = v.token(id).unwrap();
                let count = toks.iter().filter(|t| *t == token).count() as f64;
                dense[id as usize] = count * v.idf(id).unwrap();
            }
            let from_sparse = {
                let mut out = vec![0.0f64; v.len()];
                for &(id, w) in x.entries() {
                    out[id as usize] = w;
                }
                out
            };
            assert_eq!(from_sparse, dense, "mismatch on {doc:?}");

            let distinct_in_vocab = toks
                .iter()
                .filter(|t| v.id(t).is_some())
                .collect::<BTreeSet<_>>()
                .len();
            assert!(x.len() <= distinct_in_vocab);
            assert!(x.entries().windows(2).all(|w| w[0].0 < w[1].0));
        }
    }
}
