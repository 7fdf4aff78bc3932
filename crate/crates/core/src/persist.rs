//! Versioned binary containers for trained models.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 0   4   magic "HTAX"
//! 4   2   format version (u16)
//! 6   1   kind: 1 = softmax model, 2 = hierarchical estimator
//! 7   1   reserved, 0
//! 8   8   header length H (u64)
//! 16  H   UTF-8 JSON header: config snapshot, vocabulary hash, model shapes
//!         (plus tree, TF-IDF model and mode for estimators)
//! ..      f64 blocks, per model in header order: weights (row-major), bias
//! ..  32  SHA-256 of all preceding bytes
//! ```
//!
//! Each container is accompanied by a JSON metadata sidecar at
//! `<path>.json`.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::estimator::{HierarchicalEstimator, Mode, Models};
use crate::hierarchy::{ClassCode, HierarchyTree};
use crate::linear::{SoftmaxModel, TrainConfig};
use crate::text::TfidfModel;

pub const MAGIC: &[u8; 4] = b"HTAX";
pub const FORMAT_VERSION: u16 = 1;
const KIND_SOFTMAX: u8 = 1;
const KIND_ESTIMATOR: u8 = 2;
const PREAMBLE: usize = 16;
const CHECKSUM: usize = 32;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not an HTAX container")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("container holds kind {found}, expected {expected}")]
    WrongKind { expected: u8, found: u8 },
    #[error("corrupt container: {0}")]
    Corrupt(String),
    #[error("checksum mismatch")]
    ChecksumMismatch,
    #[error("vocabulary hash mismatch: container says {stored}, model hashes to {actual}")]
    VocabularyMismatch { stored: String, actual: String },
}

fn corrupt(e: impl std::fmt::Display) -> PersistError {
    PersistError::Corrupt(e.to_string())
}

#[derive(Serialize, Deserialize)]
struct ModelShape {
    /// Internal node for top-down models; absent for flat models.
    node: Option<String>,
    classes: Vec<Vec<String>>,
    n_features: usize,
    config: TrainConfig,
}

#[derive(Serialize, Deserialize)]
struct SoftmaxHeader {
    vocabulary_hash: Option<String>,
    model: ModelShape,
}

#[derive(Serialize, Deserialize)]
struct EstimatorHeader {
    mode: Mode,
    vocabulary_hash: String,
    config: TrainConfig,
    tree: HierarchyTree,
    tfidf: TfidfModel,
    models: Vec<ModelShape>,
}

fn shape_of(node: Option<&ClassCode>, model: &SoftmaxModel) -> ModelShape {
    ModelShape {
        node: node.map(|c| c.to_string()),
        classes: model
            .classes()
            .iter()
            .map(|c| c.segments().map(str::to_string).collect())
            .collect(),
        n_features: model.n_features(),
        config: model.config().clone(),
    }
}

fn encode(kind: u8, header: &impl Serialize, models: &[&SoftmaxModel]) -> Result<Vec<u8>, PersistError> {
    let header = serde_json::to_vec(header).map_err(corrupt)?;
    let n_floats: usize = models.iter().map(|m| m.weights().len() + m.bias().len()).sum();
    let mut out = Vec::with_capacity(PREAMBLE + header.len() + 8 * n_floats + CHECKSUM);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(kind);
    out.push(0);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for m in models {
        for v in m.weights().iter().chain(m.bias()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

/// Validates framing and returns (header bytes, float payload).
fn decode(bytes: &[u8], expected_kind: u8) -> Result<(&[u8], &[u8]), PersistError> {
    if bytes.len() < PREAMBLE + CHECKSUM || &bytes[..4] != MAGIC {
        return Err(PersistError::BadMagic);
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(PersistError::UnsupportedVersion(version));
    }
    if bytes[6] != expected_kind {
        return Err(PersistError::WrongKind {
            expected: expected_kind,
            found: bytes[6],
        });
    }
    let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM);
    if Sha256::digest(body).as_slice() != checksum {
        return Err(PersistError::ChecksumMismatch);
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    if PREAMBLE + header_len > body.len() {
        return Err(corrupt("header length exceeds container"));
    }
    Ok((&body[PREAMBLE..PREAMBLE + header_len], &body[PREAMBLE + header_len..]))
}

struct FloatReader<'a> {
    data: &'a [u8],
}

impl FloatReader<'_> {
    fn take(&mut self, n: usize) -> Result<Vec<f64>, PersistError> {
        if self.data.len() < 8 * n {
            return Err(corrupt("parameter payload truncated"));
        }
        let (head, rest) = self.data.split_at(8 * n);
        self.data = rest;
        Ok(head
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

fn rebuild(shape: ModelShape, floats: &mut FloatReader<'_>) -> Result<SoftmaxModel, PersistError> {
    let classes = shape
        .classes
        .iter()
        .map(ClassCode::from_segments)
        .collect::<Result<Vec<_>, _>>()
        .map_err(corrupt)?;
    let weights = floats.take(classes.len() * shape.n_features)?;
    let bias = floats.take(classes.len())?;
    SoftmaxModel::from_parameters(classes, shape.n_features, weights, bias, shape.config).map_err(corrupt)
}

pub fn softmax_to_bytes(model: &SoftmaxModel, vocabulary_hash: Option<&str>) -> Result<Vec<u8>, PersistError> {
    let header = SoftmaxHeader {
        vocabulary_hash: vocabulary_hash.map(str::to_string),
        model: shape_of(None, model),
    };
    encode(KIND_SOFTMAX, &header, &[model])
}

/// Returns the model and the vocabulary hash it was saved with.
pub fn softmax_from_bytes(bytes: &[u8]) -> Result<(SoftmaxModel, Option<String>), PersistError> {
    let (header, payload) = decode(bytes, KIND_SOFTMAX)?;
    let header: SoftmaxHeader = serde_json::from_slice(header).map_err(corrupt)?;
    let mut floats = FloatReader { data: payload };
    let model = rebuild(header.model, &mut floats)?;
    if !floats.data.is_empty() {
        return Err(corrupt("trailing parameter bytes"));
    }
    Ok((model, header.vocabulary_hash))
}

pub fn estimator_to_bytes(est: &HierarchicalEstimator) -> Result<Vec<u8>, PersistError> {
    let pairs = est.models();
    let header = EstimatorHeader {
        mode: est.mode(),
        vocabulary_hash: est.tfidf.vocabulary_hash(),
        config: est.config.clone(),
        tree: est.tree.clone(),
        tfidf: est.tfidf.clone(),
        models: pairs.iter().map(|(node, m)| shape_of(node.as_ref(), m)).collect(),
    };
    let models: Vec<&SoftmaxModel> = pairs.iter().map(|(_, m)| *m).collect();
    encode(KIND_ESTIMATOR, &header, &models)
}

pub fn estimator_from_bytes(bytes: &[u8]) -> Result<HierarchicalEstimator, PersistError> {
    let (header, payload) = decode(bytes, KIND_ESTIMATOR)?;
    let header: EstimatorHeader = serde_json::from_slice(header).map_err(corrupt)?;
    let tfidf = header.tfidf.reindex();
    let actual = tfidf.vocabulary_hash();
    if actual != header.vocabulary_hash {
        return Err(PersistError::VocabularyMismatch {
            stored: header.vocabulary_hash,
            actual,
        });
    }
    let tree = header.tree;
    let mut floats = FloatReader { data: payload };
    let models = match header.mode {
        Mode::BottomUp => {
            let [shape]: [ModelShape; 1] = header
                .models
                .try_into()
                .map_err(|_| corrupt("bottom-up container must hold exactly one model"))?;
            Models::BottomUp(rebuild(shape, &mut floats)?)
        }
        Mode::TopDown => {
            let mut slots: Vec<Option<SoftmaxModel>> = vec![None; tree.nodes().len()];
            for shape in header.models {
                let node = match &shape.node {
                    Some(s) if s.is_empty() => ClassCode::root(),
                    Some(s) => tree.lookup(s).map_err(corrupt)?,
                    None => return Err(corrupt("top-down model without a node")),
                };
                let id = tree.id_of(&node).map_err(corrupt)?;
                slots[id.0] = Some(rebuild(shape, &mut floats)?);
            }
            let complete = tree
                .nodes()
                .iter()
                .zip(&slots)
                .all(|(n, m)| n.children.is_empty() == m.is_none());
            if !complete {
                return Err(corrupt("top-down models do not match the tree's internal nodes"));
            }
            Models::TopDown(slots)
        }
    };
    if !floats.data.is_empty() {
        return Err(corrupt("trailing parameter bytes"));
    }
    Ok(HierarchicalEstimator {
        tree,
        tfidf,
        config: header.config,
        models,
    })
}

/// Metadata written next to every container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub format: String,
    pub format_version: u16,
    pub kind: String,
    pub mode: Option<Mode>,
    pub segment_lengths: Vec<usize>,
    pub level_sizes: Vec<usize>,
    pub model_count: usize,
    pub parameter_count: usize,
    pub vocabulary_size: usize,
    pub vocabulary_hash: String,
    pub min_df: usize,
    pub ngram_range: (usize, usize),
    pub config: TrainConfig,
}

impl ModelMetadata {
    pub fn for_estimator(est: &HierarchicalEstimator) -> Self {
        ModelMetadata {
            format: "HTAX".to_string(),
            format_version: FORMAT_VERSION,
            kind: "hierarchical_estimator".to_string(),
            mode: Some(est.mode()),
            segment_lengths: est.tree.segment_lengths().to_vec(),
            level_sizes: est.tree.level_sizes(),
            model_count: est.model_count(),
            parameter_count: est
                .models()
                .iter()
                .map(|(_, m)| m.weights().len() + m.bias().len())
                .sum(),
            vocabulary_size: est.tfidf.vocabulary_size(),
            vocabulary_hash: est.tfidf.vocabulary_hash(),
            min_df: est.tfidf.min_df(),
            ngram_range: (1, 1),
            config: est.config.clone(),
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into
/// place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

impl HierarchicalEstimator {
    /// Saves the container and its `<path>.json` metadata sidecar.
    pub fn save(&self, path: &Path) -> Result<(), PersistError> {
        write_atomic(path, &estimator_to_bytes(self)?)?;
        let meta = serde_json::to_vec_pretty(&ModelMetadata::for_estimator(self)).map_err(corrupt)?;
        write_atomic(&sidecar_path(path), &meta)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PersistError> {
        estimator_from_bytes(&std::fs::read(path)?)
    }
}

impl SoftmaxModel {
    pub fn save(&self, path: &Path, vocabulary_hash: Option<&str>) -> Result<(), PersistError> {
        write_atomic(path, &softmax_to_bytes(self, vocabulary_hash)?)?;
        let meta = serde_json::json!({
            "format": "HTAX",
            "format_version": FORMAT_VERSION,
            "kind": "softmax_model",
            "classes": self.n_classes(),
            "n_features": self.n_features(),
            "vocabulary_hash": vocabulary_hash,
            "config": self.config(),
        });
        write_atomic(&sidecar_path(path), &serde_json::to_vec_pretty(&meta).map_err(corrupt)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, Option<String>), PersistError> {
        softmax_from_bytes(&std::fs::read(path)?)
    }
}
