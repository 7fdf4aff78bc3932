//! Coherent hierarchical probability estimators.
//!
//! * Bottom-up: one softmax over the leaves; ancestor probabilities are
//!   sums of their children.
//! * Top-down: one softmax per internal node over its children; a node's
//!   probability is the product of conditionals along its root path
//!   (hierarchical softmax).
//!
//! Both produce a [`ProbabilityProfile`] in which every level sums to one
//! and every parent equals the sum of its children.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::LabeledDocument;
use crate::hierarchy::{ClassCode, HierarchyError, HierarchyTree, NodeId};
use crate::linear::{train_softmax, LinearError, SoftmaxModel, TrainConfig};
use crate::seed::derive_seed;
use crate::text::{SparseVector, TfidfModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("document {doc:?} is labeled with non-leaf code {code:?}")]
    NonLeafLabel { doc: String, code: String },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("estimators need a balanced tree (all leaves at full depth)")]
    UnbalancedTree,
    #[error("k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Linear(#[from] LinearError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    BottomUp,
    TopDown,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::BottomUp => "bottom_up",
            Mode::TopDown => "top_down",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bottom_up" | "bottom-up" => Ok(Mode::BottomUp),
            "top_down" | "top-down" => Ok(Mode::TopDown),
            other => Err(format!("unknown mode {other:?} (expected bottom_up or top_down)")),
        }
    }
}

/// How a single root-to-leaf path is read off a profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    /// Most probable leaf, then its ancestors.
    #[default]
    LeafArgmax,
    /// Most probable child of the previous pick, level by level.
    Greedy,
}

impl fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecodeMode::LeafArgmax => "leaf_argmax",
            DecodeMode::Greedy => "greedy",
        })
    }
}

impl FromStr for DecodeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "leaf_argmax" | "leaf-argmax" => Ok(DecodeMode::LeafArgmax),
            "greedy" => Ok(DecodeMode::Greedy),
            other => Err(format!("unknown decode mode {other:?} (expected leaf_argmax or greedy)")),
        }
    }
}

/// Per-level probability distributions for one document, each level sorted
/// by code.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityProfile {
    levels: Vec<Vec<(ClassCode, f64)>>,
}

impl ProbabilityProfile {
    /// Wraps precomputed levels. Entries are sorted by code; coherence is
    /// not checked (see [`ProbabilityProfile::coherence_error`]).
    pub fn from_levels(mut levels: Vec<Vec<(ClassCode, f64)>>) -> Self {
        for level in &mut levels {
            level.sort_by(|a, b| a.0.cmp(&b.0));
        }
        ProbabilityProfile { levels }
    }

    /// Bottom-up reconstruction: leaf probabilities (in the tree's leaf
    /// order) summed upward into every ancestor.
    pub fn from_leaf_distribution(tree: &HierarchyTree, leaf_probs: &[f64]) -> Result<Self, EstimatorError> {
        if !tree.is_balanced() {
            return Err(EstimatorError::UnbalancedTree);
        }
        if leaf_probs.len() != tree.leaf_count() {
            return Err(LinearError::ShapeMismatch(format!(
                "{} leaf probabilities for {} leaves",
                leaf_probs.len(),
                tree.leaf_count()
            ))
            .into());
        }
        let nodes = tree.nodes();
        let mut mass = vec![0.0; nodes.len()];
        for (id, &p) in tree.leaf_ids().iter().zip(leaf_probs) {
            mass[id.0] = p;
        }
        // children always carry larger ids than their parent
        for id in (1..nodes.len()).rev() {
            if !nodes[id].children.is_empty() {
                mass[id] = nodes[id].children.iter().map(|c| mass[c.0]).sum();
            }
        }
        Ok(Self::gather(tree, &mass))
    }

    /// Top-down chain rule: `conditional(node)` returns the distribution over
    /// the node's children (in code order) for every internal node.
    pub fn from_conditionals<F>(tree: &HierarchyTree, mut conditional: F) -> Result<Self, EstimatorError>
    where
        F: FnMut(&ClassCode) -> Result<Vec<f64>, EstimatorError>,
    {
        if !tree.is_balanced() {
            return Err(EstimatorError::UnbalancedTree);
        }
        let nodes = tree.nodes();
        let mut mass = vec![0.0; nodes.len()];
        mass[0] = 1.0;
        for (id, node) in nodes.iter().enumerate() {
            if node.children.is_empty() {
                continue;
            }
            let cond = conditional(&node.code)?;
            if cond.len() != node.children.len() {
                return Err(LinearError::ShapeMismatch(format!(
                    "node {:?} has {} children but {} conditionals",
                    node.code,
                    node.children.len(),
                    cond.len()
                ))
                .into());
            }
            for (child, p) in node.children.iter().zip(cond) {
                mass[child.0] = mass[id] * p;
            }
        }
        Ok(Self::gather(tree, &mass))
    }

    fn gather(tree: &HierarchyTree, mass: &[f64]) -> Self {
        let levels = (1..=tree.level_count())
            .map(|l| {
                tree.level_ids(l)
                    .iter()
                    .map(|id| (tree.node(*id).code.clone(), mass[id.0]))
                    .collect()
            })
            .collect();
        ProbabilityProfile { levels }
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    /// Entries at `level` (1-based), sorted by code.
    pub fn level(&self, level: usize) -> Result<&[(ClassCode, f64)], EstimatorError> {
        if level == 0 || level > self.levels.len() {
            return Err(HierarchyError::LevelOutOfRange {
                level,
                max: self.levels.len(),
            }
            .into());
        }
        Ok(&self.levels[level - 1])
    }

    pub fn levels(&self) -> &[Vec<(ClassCode, f64)>] {
        &self.levels
    }

    /// Probability of a node, `None` if the profile has no such node.
    pub fn probability(&self, code: &ClassCode) -> Option<f64> {
        let level = self.levels.get(code.level().checked_sub(1)?)?;
        level
            .binary_search_by(|(c, _)| c.cmp(code))
            .ok()
            .map(|i| level[i].1)
    }

    /// Largest violation of the level-sum and parent-sum identities, or
    /// `None` when both hold within `tol`.
    pub fn coherence_error(&self, tol: f64) -> Option<String> {
        for (l, level) in self.levels.iter().enumerate() {
            let sum: f64 = level.iter().map(|(_, p)| p).sum();
            if (sum - 1.0).abs() > tol {
                return Some(format!("level {} sums to {sum}", l + 1));
            }
            if let Some((c, p)) = level.iter().find(|(_, p)| !(0.0..=1.0).contains(p)) {
                return Some(format!("{c} has probability {p}"));
            }
        }
        for pair in self.levels.windows(2) {
            let (parents, children) = (&pair[0], &pair[1]);
            let mut j = 0;
            for (parent, p) in parents {
                let mut sum = 0.0;
                while j < children.len() && parent.is_prefix_of(&children[j].0) {
                    sum += children[j].1;
                    j += 1;
                }
                if (sum - p).abs() > tol {
                    return Some(format!("{parent} = {p} but its children sum to {sum}"));
                }
            }
        }
        None
    }

    /// The `k` most probable codes at `level`, descending, ties broken by
    /// code order.
    pub fn top_k(&self, level: usize, k: usize) -> Result<Vec<(ClassCode, f64)>, EstimatorError> {
        if k == 0 {
            return Err(EstimatorError::InvalidK);
        }
        let entries = self.level(level)?;
        // descending probability, then code order (entries are code-sorted)
        let order = |&a: &usize, &b: &usize| entries[b].1.total_cmp(&entries[a].1).then(a.cmp(&b));
        let mut idx: Vec<usize> = (0..entries.len()).collect();
        if k < idx.len() {
            idx.select_nth_unstable_by(k - 1, order);
            idx.truncate(k);
        }
        idx.sort_unstable_by(order);
        Ok(idx.into_iter().map(|i| entries[i].clone()).collect())
    }

    /// A root-to-leaf path (level 1 first).
    pub fn predict_path(&self, mode: DecodeMode) -> Vec<ClassCode> {
        match mode {
            DecodeMode::LeafArgmax => match self.levels.last().and_then(|l| argmax(l.iter())) {
                Some(leaf) => leaf.ancestors_inclusive(),
                None => Vec::new(),
            },
            DecodeMode::Greedy => {
                let mut path: Vec<ClassCode> = Vec::with_capacity(self.levels.len());
                for level in &self.levels {
                    let pick = match path.last() {
                        None => argmax(level.iter()),
                        Some(prev) => argmax(level.iter().filter(|(c, _)| prev.is_prefix_of(c))),
                    };
                    match pick {
                        Some(c) => path.push(c),
                        None => break,
                    }
                }
                path
            }
        }
    }
}

/// First maximum, so ties go to the smallest code of a code-sorted input.
fn argmax<'a>(entries: impl Iterator<Item = &'a (ClassCode, f64)>) -> Option<ClassCode> {
    let mut best: Option<&(ClassCode, f64)> = None;
    for e in entries {
        if best.is_none_or(|b| e.1 > b.1) {
            best = Some(e);
        }
    }
    best.map(|(c, _)| c.clone())
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Models {
    BottomUp(SoftmaxModel),
    /// Indexed by node id; `None` for leaves.
    TopDown(Vec<Option<SoftmaxModel>>),
}

/// A trained bottom-up or top-down estimator together with its taxonomy
/// and feature model.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalEstimator {
    pub(crate) tree: HierarchyTree,
    pub(crate) tfidf: TfidfModel,
    pub(crate) config: TrainConfig,
    pub(crate) models: Models,
}

/// Turns documents into (features, leaf) examples; multi-code documents
/// yield one example per code.
fn leaf_examples(
    tree: &HierarchyTree,
    docs: &[LabeledDocument],
    tfidf: &TfidfModel,
) -> Result<Vec<(SparseVector, ClassCode)>, EstimatorError> {
    if !tree.is_balanced() {
        return Err(EstimatorError::UnbalancedTree);
    }
    if docs.is_empty() {
        return Err(EstimatorError::EmptyTrainingSet);
    }
    let mut out = Vec::with_capacity(docs.len());
    for doc in docs {
        let x = tfidf.vectorize(&doc.text);
        for raw in &doc.codes {
            let code = tree.lookup(raw)?;
            if !tree.is_leaf(&code) {
                return Err(EstimatorError::NonLeafLabel {
                    doc: doc.id.clone(),
                    code: raw.clone(),
                });
            }
            out.push((x.clone(), code));
        }
    }
    Ok(out)
}

impl HierarchicalEstimator {
    pub fn train(
        mode: Mode,
        tree: &HierarchyTree,
        docs: &[LabeledDocument],
        tfidf: &TfidfModel,
        config: &TrainConfig,
    ) -> Result<Self, EstimatorError> {
        match mode {
            Mode::BottomUp => Self::train_bottom_up(tree, docs, tfidf, config),
            Mode::TopDown => Self::train_top_down(tree, docs, tfidf, config),
        }
    }

    /// A single softmax over all leaves, in canonical code order.
    pub fn train_bottom_up(
        tree: &HierarchyTree,
        docs: &[LabeledDocument],
        tfidf: &TfidfModel,
        config: &TrainConfig,
    ) -> Result<Self, EstimatorError> {
        let leaves = tree.leaf_codes();
        let examples: Vec<(SparseVector, usize)> = leaf_examples(tree, docs, tfidf)?
            .into_iter()
            .map(|(x, code)| {
                let idx = leaves.binary_search(&code).expect("leaf in tree");
                (x, idx)
            })
            .collect();
        let model = train_softmax(&examples, leaves, tfidf.vocabulary_size(), config)?;
        Ok(HierarchicalEstimator {
            tree: tree.clone(),
            tfidf: tfidf.clone(),
            config: config.clone(),
            models: Models::BottomUp(model),
        })
    }

    /// One softmax per internal node, trained on the documents whose path
    /// passes through it and labeled by the next segment. Nodes are trained
    /// independently (in parallel) with per-node seeds derived from the code.
    pub fn train_top_down(
        tree: &HierarchyTree,
        docs: &[LabeledDocument],
        tfidf: &TfidfModel,
        config: &TrainConfig,
    ) -> Result<Self, EstimatorError> {
        config.validate()?;
        let examples = leaf_examples(tree, docs, tfidf)?;
        let nodes = tree.nodes();
        let mut per_node: Vec<Vec<(SparseVector, usize)>> = vec![Vec::new(); nodes.len()];
        for (x, leaf) in &examples {
            for l in 0..leaf.level() {
                let parent = tree.id_of(&leaf.prefix(l))?;
                let child = tree.id_of(&leaf.prefix(l + 1))?;
                let k = nodes[parent.0]
                    .children
                    .iter()
                    .position(|&c| c == child)
                    .expect("child of parent");
                per_node[parent.0].push((x.clone(), k));
            }
        }
        let n_features = tfidf.vocabulary_size();
        let models = per_node
            .into_par_iter()
            .enumerate()
            .map(|(id, data)| {
                let node = &nodes[id];
                if node.children.is_empty() {
                    return Ok(None);
                }
                let classes: Vec<ClassCode> = node
                    .children
                    .iter()
                    .map(|c| nodes[c.0].code.clone())
                    .collect();
                let node_config = TrainConfig {
                    seed: derive_seed(config.seed, node.code.as_str()),
                    ..config.clone()
                };
                if data.is_empty() || classes.len() == 1 {
                    return Ok(Some(SoftmaxModel::zeros(classes, n_features, node_config)));
                }
                Ok(Some(train_softmax(&data, classes, n_features, &node_config)?))
            })
            .collect::<Result<Vec<_>, EstimatorError>>()?;
        Ok(HierarchicalEstimator {
            tree: tree.clone(),
            tfidf: tfidf.clone(),
            config: config.clone(),
            models: Models::TopDown(models),
        })
    }

    pub fn mode(&self) -> Mode {
        match self.models {
            Models::BottomUp(_) => Mode::BottomUp,
            Models::TopDown(_) => Mode::TopDown,
        }
    }

    pub fn tree(&self) -> &HierarchyTree {
        &self.tree
    }

    pub fn tfidf(&self) -> &TfidfModel {
        &self.tfidf
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// The leaf softmax of a bottom-up estimator.
    pub fn leaf_model(&self) -> Option<&SoftmaxModel> {
        match &self.models {
            Models::BottomUp(m) => Some(m),
            Models::TopDown(_) => None,
        }
    }

    /// The node softmax of a top-down estimator for internal node `code`
    /// (the root is `ClassCode::root()`).
    pub fn node_model(&self, code: &ClassCode) -> Option<&SoftmaxModel> {
        match &self.models {
            Models::BottomUp(_) => None,
            Models::TopDown(models) => {
                let id = self.tree.id_of(code).ok()?;
                models[id.0].as_ref()
            }
        }
    }

    /// Number of softmax models held.
    pub fn model_count(&self) -> usize {
        match &self.models {
            Models::BottomUp(_) => 1,
            Models::TopDown(models) => models.iter().flatten().count(),
        }
    }

    /// (node code, model) pairs; a single root-less entry for bottom-up.
    pub fn models(&self) -> Vec<(Option<ClassCode>, &SoftmaxModel)> {
        match &self.models {
            Models::BottomUp(m) => vec![(None, m)],
            Models::TopDown(models) => models
                .iter()
                .enumerate()
                .filter_map(|(id, m)| {
                    m.as_ref()
                        .map(|m| (Some(self.tree.node(NodeId(id)).code.clone()), m))
                })
                .collect(),
        }
    }

    pub fn featurize(&self, text: &str) -> SparseVector {
        self.tfidf.vectorize(text)
    }

    pub fn estimate(&self, text: &str) -> ProbabilityProfile {
        self.estimate_vector(&self.featurize(text))
            .expect("vectorized text is always within the vocabulary")
    }

    pub fn estimate_vector(&self, x: &SparseVector) -> Result<ProbabilityProfile, EstimatorError> {
        match &self.models {
            Models::BottomUp(model) => {
                let leaf_probs = model.predict_proba(x)?;
                ProbabilityProfile::from_leaf_distribution(&self.tree, &leaf_probs)
            }
            Models::TopDown(models) => ProbabilityProfile::from_conditionals(&self.tree, |code| {
                let id = self.tree.id_of(code)?;
                let model = models[id.0].as_ref().expect("internal node has a model");
                Ok(model.predict_proba(x)?)
            }),
        }
    }
}
