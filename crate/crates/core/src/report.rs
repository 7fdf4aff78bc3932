//! Evaluation reports: per-level metrics for the whole set and per source.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::document::LabeledDocument;
use crate::estimator::{DecodeMode, EstimatorError, HierarchicalEstimator, Mode};
use crate::hierarchy::{ClassCode, HierarchyError, HierarchyTree};
use crate::metrics::{self, EvalRecord, MetricsError};

/// Cut-offs reported for recall@k.
pub const RECALL_KS: [usize; 3] = [1, 3, 5];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("document {doc}: {source}")]
    Label { doc: String, source: HierarchyError },
    #[error("document {doc}: code {code} is not a leaf")]
    NonLeafLabel { doc: String, code: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("slice {slice}: accuracy rises from {upper:.6} at level {level} to {lower:.6} at level {next}", next = level + 1)]
    NonMonotonePath {
        slice: String,
        level: usize,
        upper: f64,
        lower: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelReport {
    pub level: usize,
    pub digits: usize,
    pub log_loss: f64,
    pub recall_at_1: f64,
    pub recall_at_3: f64,
    pub recall_at_5: f64,
    /// Exact-match accuracy of the decoded path at this level.
    pub path_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionReport {
    pub level: usize,
    pub labels: Vec<ClassCode>,
    pub counts: Vec<Vec<f64>>,
    pub row_percentages: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceReport {
    /// `overall` or a source name.
    pub name: String,
    pub records: usize,
    pub total_weight: f64,
    pub levels: Vec<LevelReport>,
    pub confusion: ConfusionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub mode: Option<Mode>,
    pub decode_mode: DecodeMode,
    /// How records with several flagged codes enter the log loss.
    pub multi_code_log_loss: String,
    pub slices: Vec<SliceReport>,
}

impl EvaluationReport {
    pub fn slice(&self, name: &str) -> Option<&SliceReport> {
        self.slices.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Parses a document's codes, requiring full-depth leaves.
pub fn leaf_codes(tree: &HierarchyTree, doc: &LabeledDocument) -> Result<Vec<ClassCode>, ReportError> {
    doc.codes
        .iter()
        .map(|s| {
            let code = tree.lookup(s).map_err(|source| ReportError::Label {
                doc: doc.id.clone(),
                source,
            })?;
            if tree.is_leaf(&code) {
                Ok(code)
            } else {
                Err(ReportError::NonLeafLabel {
                    doc: doc.id.clone(),
                    code: s.clone(),
                })
            }
        })
        .collect()
}

/// Scores `docs` with `est` and reports every slice. Estimation runs on the
/// rayon pool; results keep input order, so reports do not depend on the
/// thread count.
pub fn evaluate(
    est: &HierarchicalEstimator,
    docs: &[LabeledDocument],
    decode: DecodeMode,
) -> Result<EvaluationReport, ReportError> {
    let records = docs
        .par_iter()
        .map(|d| {
            let truth = leaf_codes(est.tree(), d)?;
            let record = EvalRecord::new(est.estimate(&d.text), truth, d.weight)?;
            Ok((d.source.clone(), record))
        })
        .collect::<Result<Vec<_>, ReportError>>()?;
    let mut report = build_report(est.tree(), records, decode)?;
    report.mode = Some(est.mode());
    Ok(report)
}

/// Builds the report from already scored records tagged with their source.
/// Fails if decoded-path accuracy ever increases with depth.
pub fn build_report(
    tree: &HierarchyTree,
    records: Vec<(String, EvalRecord)>,
    decode: DecodeMode,
) -> Result<EvaluationReport, ReportError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyEvaluation.into());
    }
    let (sources, records): (Vec<String>, Vec<EvalRecord>) = records.into_iter().unzip();
    let mut slices = vec![slice_report(tree, "overall", &records, decode)?];
    let mut by_source = BTreeMap::<String, Vec<EvalRecord>>::new();
    for (source, record) in sources.into_iter().zip(records) {
        by_source.entry(source).or_default().push(record);
    }
    for (source, subset) in &by_source {
        slices.push(slice_report(tree, source, subset, decode)?);
    }
    Ok(EvaluationReport {
        mode: None,
        decode_mode: decode,
        multi_code_log_loss: "max_probability_over_flagged_codes".to_string(),
        slices,
    })
}

fn slice_report(
    tree: &HierarchyTree,
    name: &str,
    records: &[EvalRecord],
    decode: DecodeMode,
) -> Result<SliceReport, ReportError> {
    let accuracy = metrics::path_accuracy(records, decode)?;
    for (l, pair) in accuracy.windows(2).enumerate() {
        if pair[1] > pair[0] {
            return Err(ReportError::NonMonotonePath {
                slice: name.to_string(),
                level: l + 1,
                upper: pair[0],
                lower: pair[1],
            });
        }
    }
    let levels = tree
        .digit_lengths()
        .into_iter()
        .enumerate()
        .map(|(i, digits)| {
            let level = i + 1;
            let [r1, r3, r5] = RECALL_KS.map(|k| metrics::recall_at_k(records, level, k));
            Ok(LevelReport {
                level,
                digits,
                log_loss: metrics::level_log_loss(records, level)?,
                recall_at_1: r1?,
                recall_at_3: r3?,
                recall_at_5: r5?,
                path_accuracy: accuracy[i],
            })
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;
    let cm = metrics::confusion_matrix(records, 1, decode)?;
    Ok(SliceReport {
        name: name.to_string(),
        records: records.len(),
        total_weight: records.iter().map(|r| r.weight).sum(),
        levels,
        confusion: ConfusionReport {
            level: 1,
            row_percentages: cm.row_percentages(),
            labels: cm.labels,
            counts: cm.counts,
        },
    })
}
