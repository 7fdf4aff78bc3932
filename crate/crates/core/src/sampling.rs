//! Stratified simple random sampling and the train/test split procedure.
//!
//! Within each stratum `h` of size `N_h` a simple random sample without
//! replacement of size `max{1, round(f * N_h)}` is drawn, rounding halves
//! away from zero. Each stratum draws from its own RNG seeded from the base
//! seed and the stratum key, so results do not depend on stratum order.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

pub use crate::document::LabeledDocument;
use crate::seed::derive_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("no documents to sample")]
    EmptyInput,
    #[error("fraction {0} outside its allowed range")]
    BadFraction(f64),
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
}

/// Character-count bin edges for advertisement length strata: `[0,50]`,
/// `(50,100]`, `(100,200]`, `(200,300]`, `(300,400]`, `(400,500]`, `>500`.
pub const LENGTH_BIN_EDGES: [usize; 6] = [50, 100, 200, 300, 400, 500];

/// One component of a stratum key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StrataField {
    Source,
    /// The document's first code.
    Code,
    /// Text length in characters, binned by upper-inclusive edges.
    CharBin(Vec<usize>),
}

impl StrataField {
    fn render(&self, doc: &LabeledDocument) -> String {
        match self {
            StrataField::Source => doc.source.clone(),
            StrataField::Code => doc.primary_code().to_string(),
            StrataField::CharBin(edges) => {
                let n = doc.text.chars().count();
                match edges.iter().position(|&e| n <= e) {
                    Some(0) => format!("[0,{}]", edges[0]),
                    Some(i) => format!("({},{}]", edges[i - 1], edges[i]),
                    None => format!(">{}", edges.last().copied().unwrap_or(0)),
                }
            }
        }
    }
}

/// Composite stratum key; rendered as the field values joined with `|`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrataKey(pub Vec<StrataField>);

impl StrataKey {
    pub fn source_and_code() -> Self {
        StrataKey(vec![StrataField::Source, StrataField::Code])
    }

    /// Code crossed with advertisement length bins.
    pub fn code_and_length() -> Self {
        StrataKey(vec![
            StrataField::Code,
            StrataField::CharBin(LENGTH_BIN_EDGES.to_vec()),
        ])
    }

    /// Parses a comma-separated field list: `source`, `code`, `chars`.
    pub fn parse(spec: &str) -> Result<Self, String> {
        let fields = spec
            .split(',')
            .map(|f| match f.trim() {
                "source" => Ok(StrataField::Source),
                "code" => Ok(StrataField::Code),
                "chars" => Ok(StrataField::CharBin(LENGTH_BIN_EDGES.to_vec())),
                other => Err(format!("unknown strata field {other:?}")),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if fields.is_empty() {
            return Err("empty strata key".into());
        }
        Ok(StrataKey(fields))
    }

    pub fn render(&self, doc: &LabeledDocument) -> String {
        self.0
            .iter()
            .map(|f| f.render(doc))
            .collect::<Vec<_>>()
            .join("|")
    }
}

/// `x` rounded to the nearest integer, halves away from zero. The small
/// offset absorbs binary representation error in products like `0.7 * 5`.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-9).floor().max(0.0) as usize
}

/// Sample size for a stratum of `n` units at sampling fraction `f`.
pub fn stratum_sample_size(n: usize, fraction: f64) -> usize {
    if n == 0 {
        return 0;
    }
    round_half_up(fraction * n as f64).clamp(1, n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumCount {
    pub stratum: String,
    /// Units in the stratum.
    pub population: usize,
    /// Units selected (sample) or sent to training (split).
    pub selected: usize,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub always_train: bool,
}

/// Seed and per-stratum sizes of a sampling run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrataManifest {
    pub seed: u64,
    pub fraction: f64,
    pub strata: Vec<StratumCount>,
}

impl StrataManifest {
    pub fn total_population(&self) -> usize {
        self.strata.iter().map(|s| s.population).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Selected documents in input order.
    pub documents: Vec<LabeledDocument>,
    pub manifest: StrataManifest,
}

fn group_by_stratum<'a>(
    docs: impl Iterator<Item = (usize, &'a LabeledDocument)>,
    key: &StrataKey,
) -> BTreeMap<String, Vec<usize>> {
    let mut strata: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, doc) in docs {
        strata.entry(key.render(doc)).or_default().push(i);
    }
    strata
}

/// Positions (into `members`) of a simple random sample of size `n`.
fn draw(members: &[usize], n: usize, seed: u64, stratum: &str) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stratum));
    let mut picked: Vec<usize> = index::sample(&mut rng, members.len(), n)
        .into_iter()
        .map(|i| members[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// Stratified simple random sample without replacement.
pub fn stratified_sample(
    docs: &[LabeledDocument],
    key: &StrataKey,
    fraction: f64,
    seed: u64,
) -> Result<Sample, SamplingError> {
    if docs.is_empty() {
        return Err(SamplingError::EmptyInput);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SamplingError::BadFraction(fraction));
    }
    let strata = group_by_stratum(docs.iter().enumerate(), key);
    let mut selected = Vec::new();
    let mut counts = Vec::with_capacity(strata.len());
    for (name, members) in &strata {
        let n = stratum_sample_size(members.len(), fraction);
        selected.extend(draw(members, n, seed, name));
        counts.push(StratumCount {
            stratum: name.clone(),
            population: members.len(),
            selected: n,
            always_train: false,
        });
    }
    selected.sort_unstable();
    Ok(Sample {
        documents: selected.into_iter().map(|i| docs[i].clone()).collect(),
        manifest: StrataManifest {
            seed,
            fraction,
            strata: counts,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub train: Vec<LabeledDocument>,
    pub test: Vec<LabeledDocument>,
    pub manifest: StrataManifest,
}

/// Training-set size for a (source, code) stratum: singletons go wholly to
/// test; larger strata keep at least one case on each side.
pub fn stratum_train_size(n: usize, train_fraction: f64) -> usize {
    if n <= 1 {
        0
    } else {
        round_half_up(train_fraction * n as f64).clamp(1, n - 1)
    }
}

/// Splits documents into train and test.
///
/// Documents whose source is in `always_train_sources` (official
/// dictionaries, thesauri) go to train. The rest are stratified by source and
/// first code: singleton strata go to test, and each larger stratum sends
/// `round(train_fraction * N_h)` randomly chosen cases to train (at least one
/// and at most `N_h - 1`) and the remainder to test.
pub fn train_test_split(
    docs: &[LabeledDocument],
    always_train_sources: &BTreeSet<String>,
    train_fraction: f64,
    seed: u64,
) -> Result<SplitResult, SamplingError> {
    if docs.is_empty() {
        return Err(SamplingError::EmptyInput);
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SamplingError::BadFraction(train_fraction));
    }
    let mut seen = HashSet::with_capacity(docs.len());
    for d in docs {
        if !seen.insert(d.id.as_str()) {
            return Err(SamplingError::DuplicateId(d.id.clone()));
        }
    }

    let mut in_train = vec![false; docs.len()];
    let mut counts = Vec::new();

    let mut fixed: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, d) in docs.iter().enumerate() {
        if always_train_sources.contains(&d.source) {
            in_train[i] = true;
            *fixed.entry(d.source.as_str()).or_default() += 1;
        }
    }
    for (source, n) in fixed {
        counts.push(StratumCount {
            stratum: source.to_string(),
            population: n,
            selected: n,
            always_train: true,
        });
    }

    let key = StrataKey::source_and_code();
    let strata = group_by_stratum(
        docs.iter()
            .enumerate()
            .filter(|(_, d)| !always_train_sources.contains(&d.source)),
        &key,
    );
    for (name, members) in &strata {
        let n_train = stratum_train_size(members.len(), train_fraction);
        for i in draw(members, n_train, seed, name) {
            in_train[i] = true;
        }
        counts.push(StratumCount {
            stratum: name.clone(),
            population: members.len(),
            selected: n_train,
            always_train: false,
        });
    }

    let (train, test): (Vec<_>, Vec<_>) = docs
        .iter()
        .zip(&in_train)
        .partition(|(_, &t)| t);
    Ok(SplitResult {
        train: train.into_iter().map(|(d, _)| d.clone()).collect(),
        test: test.into_iter().map(|(d, _)| d.clone()).collect(),
        manifest: StrataManifest {
            seed,
            fraction: train_fraction,
            strata: counts,
        },
    })
}
