//! Hierarchical probability estimation for prefix-code taxonomies.
//!
//! Occupation and industry coding schemes assign each record a fixed-depth
//! code whose prefixes name coarser categories. This crate estimates a
//! coherent probability distribution over every level of such a tree from
//! free text:
//!
//! - [`hierarchy`] parses codes and builds the taxonomy tree,
//! - [`text`] turns text into L2-normalized TF-IDF vectors,
//! - [`linear`] trains multinomial logistic regression with AdamW,
//! - [`estimator`] combines flat models bottom-up or top-down,
//! - [`metrics`] scores estimates per level and measures coder agreement,
//! - [`sampling`] draws stratified samples and train/test splits,
//! - [`datagen`] synthesizes long-tailed labeled corpora,
//! - [`persist`] stores trained models in a versioned binary container.
//!
//! ```
//! use htax::hierarchy::HierarchyTree;
//!
//! let tree = HierarchyTree::build(["2521", "2522", "2611"], &[1, 1, 1, 1]).unwrap();
//! assert_eq!(tree.level_sizes(), vec![1, 2, 2, 3]);
//! ```

pub mod cli;
pub mod datagen;
pub mod document;
pub mod estimator;
pub mod hierarchy;
pub mod linear;
pub mod metrics;
pub mod persist;
pub mod report;
pub mod sampling;
mod seed;
pub mod text;

pub use document::LabeledDocument;
pub use estimator::{DecodeMode, HierarchicalEstimator, Mode, ProbabilityProfile};
pub use hierarchy::{ClassCode, HierarchyTree};
pub use linear::{SoftmaxModel, TrainConfig};
pub use text::{SparseVector, TfidfModel};
