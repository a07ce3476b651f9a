//! Document featurizers: mean word embedding, tf-idf and LDA topic mixture.

mod lda;
mod tfidf;

use serde::{Deserialize, Serialize};

use crate::corpus::TokenizedDocument;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};

pub use lda::{fit_lda, load_topic_model, save_topic_model, topic_feature, GibbsSampler, LdaConfig, TopicModel};
pub use tfidf::{fit_corpus_stats, term_frequencies, tfidf_vector, CorpusStats};

/// A document feature vector. Sparse entries have strictly increasing indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureVector {
    Dense { values: Vec<f64> },
    Sparse { dim: usize, indices: Vec<usize>, values: Vec<f64> },
}

impl FeatureVector {
    pub fn dense(values: Vec<f64>) -> Self {
        FeatureVector::Dense { values }
    }

    pub fn dim(&self) -> usize {
        match self {
            FeatureVector::Dense { values } => values.len(),
            FeatureVector::Sparse { dim, .. } => *dim,
        }
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        match self {
            FeatureVector::Dense { values } => values.iter().zip(weights).map(|(x, w)| x * w).sum(),
            FeatureVector::Sparse { indices, values, .. } => {
                indices.iter().zip(values).map(|(&i, v)| weights[i] * v).sum()
            }
        }
    }

    /// `target += scale * self`
    pub fn add_scaled_to(&self, target: &mut [f64], scale: f64) {
        match self {
            FeatureVector::Dense { values } => {
                for (t, v) in target.iter_mut().zip(values) {
                    *t += scale * v;
                }
            }
            FeatureVector::Sparse { indices, values, .. } => {
                for (&i, v) in indices.iter().zip(values) {
                    target[i] += scale * v;
                }
            }
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        match self {
            FeatureVector::Dense { values } => values.clone(),
            FeatureVector::Sparse { dim, indices, values } => {
                let mut out = vec![0.0; *dim];
                for (&i, &v) in indices.iter().zip(values) {
                    out[i] = v;
                }
                out
            }
        }
    }

    pub fn squared_norm(&self) -> f64 {
        match self {
            FeatureVector::Dense { values } | FeatureVector::Sparse { values, .. } => {
                values.iter().map(|v| v * v).sum()
            }
        }
    }

    /// Check finiteness and sparse index ordering.
    pub fn validate(&self) -> Result<()> {
        let values = match self {
            FeatureVector::Dense { values } => values,
            FeatureVector::Sparse { dim, indices, values } => {
                if indices.len() != values.len() {
                    return Err(Error::InvalidInput("sparse vector index/value length mismatch".into()));
                }
                if indices.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidInput("sparse indices must be strictly increasing".into()));
                }
                if indices.last().is_some_and(|&i| i >= *dim) {
                    return Err(Error::InvalidInput("sparse index out of range".into()));
                }
                values
            }
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        Ok(())
    }
}

/// A fitted featurizer, stored inside model artifacts so that prediction
/// applies exactly the transformation used at training time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Featurizer {
    Mean { table: EmbeddingTable, oov: OovPolicy },
    Tfidf { stats: CorpusStats },
    Lda { model: TopicModel },
    /// Raw token sequences, consumed by the CNN.
    Tokens,
}

impl Featurizer {
    pub fn name(&self) -> &'static str {
        match self {
            Featurizer::Mean { .. } => "mean",
            Featurizer::Tfidf { .. } => "tfidf",
            Featurizer::Lda { .. } => "lda",
            Featurizer::Tokens => "tokens",
        }
    }

    /// Vector features for `doc`; `None` for the token featurizer.
    pub fn vector(&self, doc: &TokenizedDocument) -> Option<FeatureVector> {
        match self {
            Featurizer::Mean { table, oov } => Some(mean_embedding(doc, table, *oov)),
            Featurizer::Tfidf { stats } => Some(tfidf_vector(doc, stats)),
            Featurizer::Lda { model } => Some(topic_feature(doc, model)),
            Featurizer::Tokens => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OovPolicy {
    /// Out-of-vocabulary tokens do not count towards the mean.
    #[default]
    Skip,
    /// Out-of-vocabulary tokens count as zero vectors.
    Zero,
}

/// Mean of the document's word vectors. Empty or all-OOV documents map to
/// the zero vector.
pub fn mean_embedding(doc: &TokenizedDocument, table: &EmbeddingTable, oov: OovPolicy) -> FeatureVector {
    let mut sum = vec![0.0; table.dim()];
    let mut in_vocab = 0usize;
    for t in &doc.tokens {
        if let Some(v) = table.get(t) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            in_vocab += 1;
        }
    }
    let m = match oov {
        OovPolicy::Skip => in_vocab,
        OovPolicy::Zero => doc.tokens.len(),
    };
    if in_vocab > 0 {
        let inv = 1.0 / m as f64;
        sum.iter_mut().for_each(|s| *s *= inv);
    }
    FeatureVector::dense(sum)
}
