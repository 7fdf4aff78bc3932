//! Tokenization and TF-IDF features.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TextError {
    #[error("cannot fit a vocabulary on an empty corpus")]
    EmptyCorpus,
    #[error("min_df must be at least 1")]
    BadMinDf,
}

/// Default document-frequency threshold for [`TfidfModel::fit`].
pub const DEFAULT_MIN_DF: usize = 2;

/// Splits text into lowercase tokens.
///
/// A token is a maximal run of Unicode alphanumeric characters; everything
/// else (whitespace, punctuation, symbols) separates tokens and is dropped.
/// So `"C++ / .NET dev"` becomes `["c", "net", "dev"]`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Sparse vector with strictly increasing feature indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    /// Builds a vector from unsorted pairs; duplicate indices are summed.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for (i, v) in pairs {
            *acc.entry(i).or_insert(0.0) += v;
        }
        let (indices, values) = acc.into_iter().unzip();
        SparseVector { indices, values }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.indices.last().map(|&i| i as usize)
    }
}

/// Unigram TF-IDF model with smoothed idf, raw term frequency and L2
/// normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    /// Tokens in feature-index order.
    tokens: Vec<String>,
    idf: Vec<f64>,
    min_df: usize,
    document_count: usize,
    ngram: (usize, usize),
    #[serde(skip)]
    vocabulary: HashMap<String, u32>,
}

impl TfidfModel {
    /// Counts document frequencies over `corpus` and keeps tokens with
    /// `df >= min_df`. Feature indices follow token order, and
    /// `idf(t) = ln((N + 1) / (df(t) + 1)) + 1`.
    pub fn fit<S: AsRef<str>>(corpus: &[S], min_df: usize) -> Result<Self, TextError> {
        if corpus.is_empty() {
            return Err(TextError::EmptyCorpus);
        }
        if min_df == 0 {
            return Err(TextError::BadMinDf);
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in corpus {
            let mut tokens = tokenize(doc.as_ref());
            tokens.sort_unstable();
            tokens.dedup();
            for t in tokens {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        let n = corpus.len() as f64;
        let (tokens, idf): (Vec<_>, Vec<_>) = df
            .into_iter()
            .filter(|&(_, d)| d >= min_df)
            .map(|(t, d)| (t, ((n + 1.0) / (d as f64 + 1.0)).ln() + 1.0))
            .unzip();
        Ok(Self::assemble(tokens, idf, min_df, corpus.len()))
    }

    fn assemble(tokens: Vec<String>, idf: Vec<f64>, min_df: usize, document_count: usize) -> Self {
        let vocabulary = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        TfidfModel {
            tokens,
            idf,
            min_df,
            document_count,
            ngram: (1, 1),
            vocabulary,
        }
    }

    /// Rebuilds the token lookup after deserialization.
    pub(crate) fn reindex(mut self) -> Self {
        self.vocabulary = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        self
    }

    /// Term frequency times idf, L2-normalized. Out-of-vocabulary tokens are
    /// ignored, so an all-OOV text maps to the empty vector.
    pub fn vectorize(&self, text: &str) -> SparseVector {
        let mut tf: BTreeMap<u32, f64> = BTreeMap::new();
        for token in tokenize(text) {
            if let Some(&i) = self.vocabulary.get(&token) {
                *tf.entry(i).or_insert(0.0) += 1.0;
            }
        }
        let (indices, mut values): (Vec<u32>, Vec<f64>) = tf
            .into_iter()
            .map(|(i, c)| (i, c * self.idf[i as usize]))
            .unzip();
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        SparseVector { indices, values }
    }

    pub fn vocabulary_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.vocabulary.get(token).map(|&i| i as usize)
    }

    pub fn idf(&self, token: &str) -> Option<f64> {
        self.index_of(token).map(|i| self.idf[i])
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn min_df(&self) -> usize {
        self.min_df
    }

    pub fn document_count(&self) -> usize {
        self.document_count
    }

    /// SHA-256 over the tokens in index order, hex encoded. Models trained on
    /// this vocabulary record it so mismatched pairings are detectable.
    pub fn vocabulary_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for t in &self.tokens {
            hasher.update(t.as_bytes());
            hasher.update([0u8]);
        }
        hex::encode(hasher.finalize())
    }
}
