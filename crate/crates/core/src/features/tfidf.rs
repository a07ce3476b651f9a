use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::FeatureVector;
use crate::corpus::TokenizedDocument;
use crate::error::{Error, Result};

/// Document frequencies over a fitted corpus. Column `i` is `vocab[i]`;
/// columns are in lexicographic word order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StatsRepr")]
pub struct CorpusStats {
    pub n_docs: usize,
    pub vocab: Vec<String>,
    pub doc_freq: Vec<usize>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct StatsRepr {
    n_docs: usize,
    vocab: Vec<String>,
    doc_freq: Vec<usize>,
}

impl TryFrom<StatsRepr> for CorpusStats {
    type Error = Error;

    fn try_from(r: StatsRepr) -> Result<Self> {
        Self::new(r.n_docs, r.vocab, r.doc_freq)
    }
}

impl CorpusStats {
    pub fn new(n_docs: usize, vocab: Vec<String>, doc_freq: Vec<usize>) -> Result<Self> {
        if vocab.len() != doc_freq.len() {
            return Err(Error::InvalidInput("vocab and doc_freq lengths differ".into()));
        }
        if let Some(w) = vocab.iter().zip(&doc_freq).find(|(_, &df)| df == 0 || df > n_docs) {
            return Err(Error::InvalidInput(format!("document frequency of `{}` outside 1..=n_docs", w.0)));
        }
        let index: HashMap<String, usize> = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        if index.len() != vocab.len() {
            return Err(Error::InvalidInput("duplicate word in vocabulary".into()));
        }
        Ok(Self { n_docs, vocab, doc_freq, index })
    }

    pub fn column(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn doc_freq_of(&self, word: &str) -> Option<usize> {
        self.column(word).map(|i| self.doc_freq[i])
    }

    pub fn dim(&self) -> usize {
        self.vocab.len()
    }

    /// `ln(N / df)` for column `i`.
    pub fn idf(&self, i: usize) -> f64 {
        (self.n_docs as f64 / self.doc_freq[i] as f64).ln()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Count, for every word, the number of documents containing it.
pub fn fit_corpus_stats(corpus: &[TokenizedDocument]) -> Result<CorpusStats> {
    if corpus.is_empty() {
        return Err(Error::InvalidInput("cannot fit corpus statistics on an empty corpus".into()));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in corpus {
        let distinct: BTreeSet<&str> = doc.tokens.iter().map(String::as_str).collect();
        for w in distinct {
            *df.entry(w).or_default() += 1;
        }
    }
    let (vocab, doc_freq) = df.into_iter().map(|(w, c)| (w.to_owned(), c)).unzip();
    CorpusStats::new(corpus.len(), vocab, doc_freq)
}

/// Relative frequency of each distinct token: count / document length.
pub fn term_frequencies(doc: &TokenizedDocument) -> BTreeMap<&str, f64> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &doc.tokens {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let len = doc.tokens.len() as f64;
    counts.into_iter().map(|(w, c)| (w, c as f64 / len)).collect()
}

/// tf-idf with `tf = count / doc length` and `idf = ln(N / df)`.
///
/// Words unknown to `stats` and words present in every fitted document
/// (weight zero) are left out of the sparse vector.
pub fn tfidf_vector(doc: &TokenizedDocument, stats: &CorpusStats) -> FeatureVector {
    let mut entries: Vec<(usize, f64)> = term_frequencies(doc)
        .into_iter()
        .filter_map(|(w, tf)| stats.column(w).map(|col| (col, tf * stats.idf(col))))
        .filter(|&(_, w)| w != 0.0)
        .collect();
    entries.sort_by_key(|e| e.0);
    let (indices, values) = entries.into_iter().unzip();
    FeatureVector::Sparse { dim: stats.dim(), indices, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(s: &str) -> TokenizedDocument {
        TokenizedDocument::from_tokens("d", s.split_whitespace().map(str::to_owned).collect())
    }

    #[test]
    fn doc_freq_counts_documents() {
        let corpus = [doc("a b a a a a"), doc("a c"), doc("a d"), doc("a e")];
        let s = fit_corpus_stats(&corpus).unwrap();
        assert_eq!(s.doc_freq_of("a"), Some(4));
        assert_eq!(s.doc_freq_of("b"), Some(1));

        let s2 = fit_corpus_stats(&[doc("x y"), doc("z w v")]).unwrap();
        assert_eq!(s2.dim(), 5);
        assert!(fit_corpus_stats(&[]).is_err());
    }

    #[test]
    fn tfidf_examples() {
        // "t" appears twice in an 8-token document and in 1 of 4 documents.
        let corpus = [doc("t t c c c c c c"), doc("c"), doc("c x"), doc("c y")];
        let s = fit_corpus_stats(&corpus).unwrap();
        let v = tfidf_vector(&corpus[0], &s);
        let FeatureVector::Sparse { indices, values, .. } = &v else { panic!() };
        // "c" is in every document and drops out.
        assert_eq!(indices, &[s.column("t").unwrap()]);
        assert!((values[0] - 0.25 * 4f64.ln()).abs() < 1e-12);
        assert!((values[0] - 0.34657).abs() < 1e-5);

        let unseen = tfidf_vector(&doc("never seen words"), &s);
        assert_eq!(unseen.squared_norm(), 0.0);
        assert!(tfidf_vector(&doc(""), &s).validate().is_ok());
    }

    #[test]
    fn term_frequencies_sum_to_one() {
        let d = doc("a b a c a b q");
        let tf = term_frequencies(&d);
        assert!((tf.values().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((tf["a"] - 3.0 / 7.0).abs() < 1e-15);
        assert!(term_frequencies(&doc("")).is_empty());
    }

    #[test]
    fn stats_json_round_trip() {
        let s = fit_corpus_stats(&[doc("a b"), doc("b c")]).unwrap();
        let back = CorpusStats::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.column("c"), Some(2));
    }

    proptest! {
        #[test]
        fn idf_decreases_with_doc_freq(n in 2usize..30) {
            let vocab: Vec<String> = (1..=n).map(|i| format!("w{i:03}")).collect();
            let df: Vec<usize> = (1..=n).collect();
            let s = CorpusStats::new(n, vocab, df).unwrap();
            for i in 1..n {
                prop_assert!(s.idf(i) >= 0.0);
                prop_assert!(s.idf(i) < s.idf(i - 1));
            }
            prop_assert_eq!(s.idf(n - 1), 0.0);
        }

        #[test]
        fn tfidf_is_bag_of_words(idx in prop::collection::vec(0usize..6, 1..15), reps in 1usize..4) {
            let words = ["a", "b", "c", "d", "e", "f"];
            let corpus = [doc("a b"), doc("c d e"), doc("f a"), doc("b")];
            let s = fit_corpus_stats(&corpus).unwrap();
            let tokens: Vec<&str> = idx.iter().map(|&i| words[i]).collect();
            let base = tfidf_vector(&doc(&tokens.join(" ")), &s);
            let mut rev = tokens.clone();
            rev.reverse();
            let perm = tfidf_vector(&doc(&rev.join(" ")), &s);
            let rep: Vec<&str> = tokens.iter().cycle().take(tokens.len() * reps).copied().collect();
            let dup = tfidf_vector(&doc(&rep.join(" ")), &s);
            let (b, p, d) = (base.to_dense(), perm.to_dense(), dup.to_dense());
            for k in 0..b.len() {
                prop_assert!((b[k] - p[k]).abs() < 1e-12);
                prop_assert!((b[k] - d[k]).abs() < 1e-12);
                prop_assert!(b[k] >= 0.0);
            }
        }
    }
}
