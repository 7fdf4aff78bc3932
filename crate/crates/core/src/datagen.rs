//! Synthetic long-tail corpora over any hierarchy.
//!
//! Leaf frequencies follow a Zipf-like law, `count(rank) ∝ rank^-s`, with
//! counts apportioned deterministically (largest remainder) so the sorted
//! counts never increase with rank. Each token is drawn from the leaf's own
//! vocabulary with probability `class_token_signal`, otherwise from a shared
//! noise vocabulary.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::LabeledDocument;
use crate::hierarchy::{ClassCode, HierarchyTree};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatagenError {
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub total_docs: usize,
    /// Zipf exponent `s`; 0 gives equal class counts.
    pub tail_exponent: f64,
    /// Inclusive range of tokens per document.
    pub tokens_per_doc: (usize, usize),
    /// Probability that a token comes from the class vocabulary.
    pub class_token_signal: f64,
    /// Distinct class-specific tokens per leaf.
    pub signal_tokens_per_class: usize,
    pub noise_vocabulary: usize,
    /// Probability that a document is flagged with a second leaf code.
    pub multi_code_rate: f64,
    pub source: String,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            total_docs: 1000,
            tail_exponent: 1.0,
            tokens_per_doc: (8, 24),
            class_token_signal: 0.5,
            signal_tokens_per_class: 3,
            noise_vocabulary: 500,
            multi_code_rate: 0.0,
            source: "synthetic".to_string(),
            seed: 0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), DatagenError> {
        let bad = |m: &str| Err(DatagenError::InvalidSpec(m.to_string()));
        if self.total_docs == 0 {
            return bad("total_docs must be positive");
        }
        if !(self.tail_exponent >= 0.0 && self.tail_exponent.is_finite()) {
            return bad("tail_exponent must be finite and non-negative");
        }
        let (lo, hi) = self.tokens_per_doc;
        if lo == 0 || lo > hi {
            return bad("tokens_per_doc must be a non-empty range of positive counts");
        }
        if !(0.0..=1.0).contains(&self.class_token_signal) {
            return bad("class_token_signal must lie in [0, 1]");
        }
        if self.signal_tokens_per_class == 0 {
            return bad("signal_tokens_per_class must be positive");
        }
        if self.noise_vocabulary == 0 && self.class_token_signal < 1.0 {
            return bad("noise_vocabulary must be positive when class_token_signal < 1");
        }
        if !(0.0..=1.0).contains(&self.multi_code_rate) {
            return bad("multi_code_rate must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Document counts by frequency rank for `classes` classes.
pub fn zipf_counts(classes: usize, total: usize, exponent: f64) -> Vec<usize> {
    if classes == 0 {
        return Vec::new();
    }
    let weights: Vec<f64> = (1..=classes).map(|r| (r as f64).powf(-exponent)).collect();
    let norm: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / norm).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut by_remainder: Vec<usize> = (0..classes).collect();
    // ties go to the better rank, which keeps counts non-increasing
    by_remainder.sort_by(|&a, &b| {
        let (fa, fb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &r in by_remainder.iter().take(total - assigned) {
        counts[r] += 1;
    }
    counts
}

/// Share of classes with fewer than `threshold` documents.
pub fn fraction_below(counts: &[usize], threshold: usize) -> f64 {
    counts.iter().filter(|&&c| c < threshold).count() as f64 / counts.len().max(1) as f64
}

/// Finds the exponent whose Zipf counts put `target` of the classes below
/// `threshold` documents, by bisection on `[0, 8]`.
pub fn tune_tail_exponent(classes: usize, total: usize, threshold: usize, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 8.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if fraction_below(&zipf_counts(classes, total, mid), threshold) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Name of the `j`-th class-specific token of `leaf`.
pub fn signal_token(leaf: &ClassCode, j: usize) -> String {
    format!("c{}w{j}", leaf.as_str().to_lowercase())
}

pub fn noise_token(j: usize) -> String {
    format!("n{j}")
}

/// Generates a labeled corpus over the leaves of `tree`. Documents come out
/// shuffled, with ids `synth-000000`, `synth-000001`, ...
pub fn generate_corpus(tree: &HierarchyTree, spec: &CorpusSpec) -> Result<Vec<LabeledDocument>, DatagenError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut ranked = tree.leaf_codes();
    ranked.shuffle(&mut rng);
    let counts = zipf_counts(ranked.len(), spec.total_docs, spec.tail_exponent);

    let mut labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(r, &c)| std::iter::repeat_n(r, c))
        .collect();
    labels.shuffle(&mut rng);

    let (lo, hi) = spec.tokens_per_doc;
    let mut docs = Vec::with_capacity(labels.len());
    for (i, &rank) in labels.iter().enumerate() {
        let leaf = &ranked[rank];
        let n_tokens = rng.random_range(lo..=hi);
        let tokens: Vec<String> = (0..n_tokens)
            .map(|_| {
                if rng.random_bool(spec.class_token_signal) {
                    signal_token(leaf, rng.random_range(0..spec.signal_tokens_per_class))
                } else {
                    noise_token(rng.random_range(0..spec.noise_vocabulary))
                }
            })
            .collect();
        let mut codes = vec![leaf.to_string()];
        if ranked.len() > 1 && spec.multi_code_rate > 0.0 && rng.random_bool(spec.multi_code_rate) {
            let mut other = rng.random_range(0..ranked.len() - 1);
            if other >= rank {
                other += 1;
            }
            codes.push(ranked[other].to_string());
        }
        docs.push(LabeledDocument {
            id: format!("synth-{i:06}"),
            text: tokens.join(" "),
            codes,
            source: spec.source.clone(),
            weight: 1.0,
        });
    }
    Ok(docs)
}

/// Class counts of a generated corpus by first code, sorted descending.
pub fn sorted_class_counts(docs: &[LabeledDocument]) -> Vec<usize> {
    let mut map = std::collections::HashMap::<&str, usize>::new();
    for d in docs {
        *map.entry(d.primary_code()).or_default() += 1;
    }
    let mut counts: Vec<usize> = map.into_values().collect();
    counts.sort_unstable_by(|a, b| b.cmp(a));
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree() -> HierarchyTree {
        let codes: Vec<String> = (0..3)
            .flat_map(|a| (0..10).flat_map(move |b| (0..10).map(move |c| format!("{a}{b}{c}"))))
            .collect();
        HierarchyTree::build(codes, &[1, 1, 1]).unwrap()
    }

    #[test]
    fn zipf_counts_sum_and_monotone() {
        for s in [0.0, 0.5, 1.2, 2.0] {
            let c = zipf_counts(300, 20_000, s);
            assert_eq!(c.iter().sum::<usize>(), 20_000);
            assert!(c.windows(2).all(|w| w[0] >= w[1]), "s={s}");
        }
        let flat = zipf_counts(300, 20_000, 0.0);
        let ratio = *flat.iter().max().unwrap() as f64 / *flat.iter().min().unwrap() as f64;
        assert!(ratio <= 1.1);
    }

    #[test]
    fn flat_tail_is_near_uniform() {
        let spec = CorpusSpec { total_docs: 30_000, tail_exponent: 0.0, ..CorpusSpec::default() };
        let docs = generate_corpus(&tree(), &spec).unwrap();
        let counts = sorted_class_counts(&docs);
        assert_eq!(counts.len(), 300);
        assert!(counts[0] as f64 / *counts.last().unwrap() as f64 <= 1.1);
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = CorpusSpec { total_docs: 200, seed: 5, ..CorpusSpec::default() };
        let a = generate_corpus(&tree(), &spec).unwrap();
        let b = generate_corpus(&tree(), &spec).unwrap();
        assert_eq!(a, b);
        let c = generate_corpus(&tree(), &CorpusSpec { seed: 6, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_code_by_default() {
        let docs = generate_corpus(&tree(), &CorpusSpec::default()).unwrap();
        assert!(docs.iter().all(|d| d.codes.len() == 1));
        let spec = CorpusSpec { multi_code_rate: 1.0, ..CorpusSpec::default() };
        let docs = generate_corpus(&tree(), &spec).unwrap();
        assert!(docs.iter().all(|d| d.codes.len() == 2 && d.codes[0] != d.codes[1]));
    }

    #[test]
    fn pure_signal_tokens_belong_to_the_leaf() {
        let spec = CorpusSpec { class_token_signal: 1.0, total_docs: 100, ..CorpusSpec::default() };
        for d in generate_corpus(&tree(), &spec).unwrap() {
            let prefix = format!("c{}w", d.codes[0]);
            assert!(d.text.split(' ').all(|t| t.starts_with(&prefix)));
        }
    }

    #[test]
    fn tuned_exponent_hits_target() {
        let s = tune_tail_exponent(300, 20_000, 10, 1.0 / 3.0);
        let frac = fraction_below(&zipf_counts(300, 20_000, s), 10);
        assert!((frac - 1.0 / 3.0).abs() < 0.01, "s={s} frac={frac}");
        assert!((0.8..1.6).contains(&s), "{s}");
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            CorpusSpec { total_docs: 0, ..CorpusSpec::default() },
            CorpusSpec { tokens_per_doc: (5, 2), ..CorpusSpec::default() },
            CorpusSpec { class_token_signal: 1.5, ..CorpusSpec::default() },
            CorpusSpec { tail_exponent: -1.0, ..CorpusSpec::default() },
        ];
        for spec in bad {
            assert!(matches!(generate_corpus(&tree(), &spec), Err(DatagenError::InvalidSpec(_))));
        }
    }
}
