//! Per-level evaluation metrics and coder-agreement statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{DecodeMode, ProbabilityProfile};
use crate::hierarchy::ClassCode;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error("coder table is empty")]
    EmptyTable,
    #[error("digit level {digits} is not one of {allowed:?}")]
    BadDigitLevel { digits: usize, allowed: Vec<usize> },
    #[error("expected agreement is 1; kappa is undefined")]
    DegenerateTable,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("level {level} out of range 1..={max}")]
    LevelOutOfRange { level: usize, max: usize },
    #[error("code {code:?} is shorter than {digits} digits")]
    ShortCode { code: String, digits: usize },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
}

/// Smallest probability used inside a logarithm.
pub const LOG_LOSS_FLOOR: f64 = 1e-12;

/// One evaluated document: its predicted profile, its true leaf codes and a
/// positive weight.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub profile: ProbabilityProfile,
    pub true_codes: Vec<ClassCode>,
    pub weight: f64,
}

impl EvalRecord {
    pub fn new(profile: ProbabilityProfile, true_codes: Vec<ClassCode>, weight: f64) -> Result<Self, MetricsError> {
        if true_codes.is_empty() {
            return Err(MetricsError::InvalidRecord("no true codes".into()));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(MetricsError::InvalidRecord(format!("weight {weight}")));
        }
        Ok(EvalRecord {
            profile,
            true_codes,
            weight,
        })
    }

    /// Distinct ancestors of the true codes at `level`.
    pub fn truth_at(&self, level: usize) -> Vec<ClassCode> {
        let mut out: Vec<ClassCode> = self.true_codes.iter().map(|c| c.prefix(level)).collect();
        out.sort();
        out.dedup();
        out
    }

    fn level_entries(&self, level: usize) -> Result<&[(ClassCode, f64)], MetricsError> {
        self.profile.level(level).map_err(|_| MetricsError::LevelOutOfRange {
            level,
            max: self.profile.level_count(),
        })
    }
}

fn weighted_mean<F>(records: &[EvalRecord], mut f: F) -> Result<f64, MetricsError>
where
    F: FnMut(&EvalRecord) -> Result<f64, MetricsError>,
{
    if records.is_empty() {
        return Err(MetricsError::EmptyEvaluation);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for r in records {
        num += r.weight * f(r)?;
        den += r.weight;
    }
    Ok(num / den)
}

/// Weighted mean of `-ln p(true ancestor at level)`, with probabilities
/// clamped to `[1e-12, 1]`. A record flagged with several codes scores the
/// most probable of its true ancestors.
pub fn level_log_loss(records: &[EvalRecord], level: usize) -> Result<f64, MetricsError> {
    weighted_mean(records, |r| {
        r.level_entries(level)?;
        let p = r
            .truth_at(level)
            .iter()
            .map(|c| r.profile.probability(c).unwrap_or(0.0))
            .fold(0.0, f64::max);
        Ok(-p.clamp(LOG_LOSS_FLOOR, 1.0).ln())
    })
}

/// Weighted mean over records of `|top_k ∩ truth| / |truth|` at `level`.
pub fn recall_at_k(records: &[EvalRecord], level: usize, k: usize) -> Result<f64, MetricsError> {
    if k == 0 {
        return Err(MetricsError::InvalidK);
    }
    weighted_mean(records, |r| {
        r.level_entries(level)?;
        let top = r.profile.top_k(level, k).expect("level and k checked");
        let truth = r.truth_at(level);
        let hits = top.iter().filter(|(c, _)| truth.binary_search(c).is_ok()).count();
        Ok(hits as f64 / truth.len() as f64)
    })
}

/// Weighted exact-match accuracy of decoded paths at every level. A level
/// counts as correct when the decoded code is an ancestor of any true code.
pub fn path_accuracy(records: &[EvalRecord], mode: DecodeMode) -> Result<Vec<f64>, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyEvaluation);
    }
    let depth = records[0].profile.level_count();
    let mut correct = vec![0.0; depth];
    let mut total = 0.0;
    for r in records {
        let path = r.profile.predict_path(mode);
        for (l, code) in path.iter().enumerate().take(depth) {
            if r.truth_at(l + 1).binary_search(code).is_ok() {
                correct[l] += r.weight;
            }
        }
        total += r.weight;
    }
    Ok(correct.into_iter().map(|c| c / total).collect())
}

/// Weighted counts with rows for true codes and columns for predicted codes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionMatrix {
    pub level: usize,
    pub labels: Vec<ClassCode>,
    pub counts: Vec<Vec<f64>>,
}

impl ConfusionMatrix {
    /// Rows rescaled to percentages; empty rows stay zero.
    pub fn row_percentages(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let sum: f64 = row.iter().sum();
                row.iter()
                    .map(|&v| if sum > 0.0 { 100.0 * v / sum } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    pub fn diagonal_mass(&self) -> f64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().flatten().sum()
    }

    pub fn get(&self, truth: &ClassCode, predicted: &ClassCode) -> Option<f64> {
        let i = self.labels.binary_search(truth).ok()?;
        let j = self.labels.binary_search(predicted).ok()?;
        Some(self.counts[i][j])
    }
}

/// Confusion matrix at `level` over the nodes of that level, using the
/// record's first true code as the row and the decoded path as the column.
pub fn confusion_matrix(records: &[EvalRecord], level: usize, mode: DecodeMode) -> Result<ConfusionMatrix, MetricsError> {
    let first = records.first().ok_or(MetricsError::EmptyEvaluation)?;
    let labels: Vec<ClassCode> = first.level_entries(level)?.iter().map(|(c, _)| c.clone()).collect();
    let n = labels.len();
    let mut counts = vec![vec![0.0; n]; n];
    for r in records {
        r.level_entries(level)?;
        let truth = r.true_codes[0].prefix(level);
        let path = r.profile.predict_path(mode);
        let (Some(pred), Ok(i)) = (path.get(level - 1), labels.binary_search(&truth)) else {
            continue;
        };
        if let Ok(j) = labels.binary_search(pred) {
            counts[i][j] += r.weight;
        }
    }
    Ok(ConfusionMatrix { level, labels, counts })
}

/// Two coders' codes for one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoderPair {
    pub coder_a: String,
    pub coder_b: String,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

/// Paired code assignments, compared at a digit-prefix length drawn from
/// `digit_levels` (for KZiS: 1, 2, 3, 4, 6).
#[derive(Debug, Clone, PartialEq)]
pub struct CoderTable {
    pub pairs: Vec<CoderPair>,
    pub digit_levels: Vec<usize>,
}

impl CoderTable {
    pub fn new(pairs: Vec<CoderPair>, digit_levels: Vec<usize>) -> Self {
        CoderTable { pairs, digit_levels }
    }

    /// Builds an unweighted table from a square count matrix over
    /// single-character categories `categories[i]`.
    pub fn from_counts(categories: &[&str], counts: &[Vec<usize>], digit_levels: Vec<usize>) -> Self {
        let mut pairs = Vec::new();
        for (i, row) in counts.iter().enumerate() {
            for (j, &n) in row.iter().enumerate() {
                for _ in 0..n {
                    pairs.push(CoderPair {
                        coder_a: categories[i].to_string(),
                        coder_b: categories[j].to_string(),
                        weight: 1.0,
                    });
                }
            }
        }
        CoderTable { pairs, digit_levels }
    }

    /// Weighted (a-prefix, b-prefix, weight) triples at `digits`.
    fn prefixes(&self, digits: usize) -> Result<Vec<(&str, &str, f64)>, MetricsError> {
        if self.pairs.is_empty() {
            return Err(MetricsError::EmptyTable);
        }
        if !self.digit_levels.contains(&digits) {
            return Err(MetricsError::BadDigitLevel {
                digits,
                allowed: self.digit_levels.clone(),
            });
        }
        self.pairs
            .iter()
            .map(|p| {
                if !(p.weight > 0.0 && p.weight.is_finite()) {
                    return Err(MetricsError::InvalidRecord(format!("weight {}", p.weight)));
                }
                Ok((cut(&p.coder_a, digits)?, cut(&p.coder_b, digits)?, p.weight))
            })
            .collect()
    }
}

fn cut(s: &str, digits: usize) -> Result<&str, MetricsError> {
    s.get(..digits).ok_or_else(|| MetricsError::ShortCode {
        code: s.to_string(),
        digits,
    })
}

/// Agreement proportion (in percent) with a 95% confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementEstimate {
    pub digits: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub items: usize,
    /// Kish effective sample size used for the interval.
    pub effective_n: f64,
}

const Z_95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for proportion `p` at sample size `n`.
pub fn wilson_interval(p: f64, n: f64) -> (f64, f64) {
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).clamp(0.0, 1.0), (center + half).clamp(0.0, 1.0))
}

/// Weighted share of items whose two codes agree on the first `digits`
/// characters. The interval is a Wilson interval at the Kish effective
/// sample size; it is not a design-based survey variance estimate.
pub fn agreement_rate(table: &CoderTable, digits: usize) -> Result<AgreementEstimate, MetricsError> {
    let rows = table.prefixes(digits)?;
    let total: f64 = rows.iter().map(|r| r.2).sum();
    let sum_sq: f64 = rows.iter().map(|r| r.2 * r.2).sum();
    let agree: f64 = rows.iter().filter(|r| r.0 == r.1).map(|r| r.2).sum();
    let p = agree / total;
    let n_eff = total * total / sum_sq;
    let (lo, hi) = wilson_interval(p, n_eff);
    Ok(AgreementEstimate {
        digits,
        rate: 100.0 * p,
        ci_low: 100.0 * lo,
        ci_high: 100.0 * hi,
        items: rows.len(),
        effective_n: n_eff,
    })
}

/// Cohen's kappa `(p_o - p_e) / (1 - p_e)` on `digits`-prefixes, with record
/// weights in both the observed agreement and the marginals.
pub fn cohens_kappa(table: &CoderTable, digits: usize) -> Result<f64, MetricsError> {
    let rows = table.prefixes(digits)?;
    let total: f64 = rows.iter().map(|r| r.2).sum();
    let mut marginals: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    let mut observed = 0.0;
    for &(a, b, w) in &rows {
        marginals.entry(a).or_default().0 += w;
        marginals.entry(b).or_default().1 += w;
        if a == b {
            observed += w;
        }
    }
    let p_o = observed / total;
    let p_e: f64 = marginals.values().map(|(a, b)| (a / total) * (b / total)).sum();
    if 1.0 - p_e <= f64::EPSILON {
        return Err(MetricsError::DegenerateTable);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}
