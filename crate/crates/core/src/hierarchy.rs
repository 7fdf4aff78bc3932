//! Prefix-code taxonomies.
//!
//! A class code is a sequence of segments, one per hierarchy level. Every
//! prefix of a code that ends on a segment boundary names an ancestor node,
//! and the empty code names the root, which carries no class.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod kzis;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HierarchyError {
    #[error("malformed code {code:?}: {reason}")]
    MalformedCode { code: String, reason: String },
    #[error("no codes supplied")]
    EmptyInput,
    #[error("unknown code {0:?}")]
    UnknownCode(String),
    #[error("level {level} out of range 1..={max}")]
    LevelOutOfRange { level: usize, max: usize },
    #[error("invalid segment lengths {0:?}")]
    BadSegments(Vec<usize>),
    #[error("cannot read hierarchy file: {0}")]
    Io(String),
}

/// A node identity in a prefix-code taxonomy, e.g. `252102` split as
/// `2|5|2|1|02`.
///
/// Ordering is lexicographic on the rendered form, which coincides with
/// segment-wise ordering for codes parsed under the same segment widths.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassCode {
    text: String,
    // cumulative end offset of each segment in `text`
    ends: Vec<u16>,
}

impl ClassCode {
    /// The empty code of the tree root.
    pub fn root() -> Self {
        ClassCode {
            text: String::new(),
            ends: Vec::new(),
        }
    }

    /// Parses a rendered code under the given per-level segment widths. The
    /// code may stop at any segment boundary, so `"25"` parses as a level-2
    /// code under `[1, 1, 1, 1, 2]`.
    pub fn parse(s: &str, segment_lengths: &[usize]) -> Result<Self, HierarchyError> {
        let malformed = |reason: &str| HierarchyError::MalformedCode {
            code: s.to_string(),
            reason: reason.to_string(),
        };
        if s.is_empty() {
            return Err(malformed("empty code"));
        }
        if let Some(c) = s.chars().find(|c| !c.is_ascii_alphanumeric()) {
            return Err(malformed(&format!("symbol {c:?} is not alphanumeric")));
        }
        let mut ends = Vec::with_capacity(segment_lengths.len());
        let mut end = 0usize;
        for &width in segment_lengths {
            if end == s.len() {
                break;
            }
            end += width;
            if end > s.len() {
                return Err(malformed("length does not end on a segment boundary"));
            }
            ends.push(end as u16);
        }
        if end != s.len() {
            return Err(malformed("longer than the full code length"));
        }
        Ok(ClassCode {
            text: s.to_string(),
            ends,
        })
    }

    /// Builds a code from explicit segments.
    pub fn from_segments<I, S>(segments: I) -> Result<Self, HierarchyError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut code = ClassCode::root();
        for seg in segments {
            let seg = seg.as_ref();
            if seg.is_empty() || !seg.chars().all(|c| c.is_ascii_alphanumeric()) {
                return Err(HierarchyError::MalformedCode {
                    code: format!("{}{}", code.text, seg),
                    reason: format!("bad segment {seg:?}"),
                });
            }
            code.text.push_str(seg);
            code.ends.push(code.text.len() as u16);
        }
        Ok(code)
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    /// Number of segments, which is the node's depth below the root.
    pub fn level(&self) -> usize {
        self.ends.len()
    }

    pub fn is_root(&self) -> bool {
        self.ends.is_empty()
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> + '_ {
        let starts = std::iter::once(0u16).chain(self.ends.iter().copied());
        starts
            .zip(self.ends.iter().copied())
            .map(move |(a, b)| &self.text[a as usize..b as usize])
    }

    pub fn last_segment(&self) -> Option<&str> {
        self.segments().last()
    }

    /// The prefix of this code with `level` segments. Levels beyond the code
    /// length return the code itself.
    pub fn prefix(&self, level: usize) -> ClassCode {
        let level = level.min(self.level());
        let end = if level == 0 {
            0
        } else {
            self.ends[level - 1] as usize
        };
        ClassCode {
            text: self.text[..end].to_string(),
            ends: self.ends[..level].to_vec(),
        }
    }

    pub fn parent(&self) -> Option<ClassCode> {
        if self.is_root() {
            None
        } else {
            Some(self.prefix(self.level() - 1))
        }
    }

    /// True when `self` is an ancestor of `other` or equal to it.
    pub fn is_prefix_of(&self, other: &ClassCode) -> bool {
        self.level() <= other.level() && other.ends[..self.level()] == self.ends[..]
            && other.text.starts_with(&self.text)
    }

    /// All non-root prefixes from level 1 up to and including this code.
    pub fn ancestors_inclusive(&self) -> Vec<ClassCode> {
        (1..=self.level()).map(|l| self.prefix(l)).collect()
    }
}

impl fmt::Display for ClassCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl fmt::Debug for ClassCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_root() {
            return f.write_str("ClassCode(∅)");
        }
        write!(f, "ClassCode(")?;
        for (i, s) in self.segments().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            f.write_str(s)?;
        }
        f.write_str(")")
    }
}

impl Serialize for ClassCode {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) struct NodeId(pub(crate) usize);

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub(crate) code: ClassCode,
    pub(crate) parent: Option<NodeId>,
    pub(crate) children: Vec<NodeId>,
    pub(crate) label: Option<String>,
}

/// An immutable prefix-code taxonomy.
///
/// Node ids are dense and assigned level by level in code order, so the
/// root is id 0 and every parent id is smaller than its children's ids.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "TreeRepr", into = "TreeRepr")]
pub struct HierarchyTree {
    segment_lengths: Vec<usize>,
    nodes: Vec<Node>,
    index: HashMap<ClassCode, NodeId>,
    levels: Vec<Vec<NodeId>>,
    leaves: Vec<NodeId>,
    alphabet: Vec<BTreeSet<char>>,
}

impl PartialEq for HierarchyTree {
    fn eq(&self, other: &Self) -> bool {
        self.segment_lengths == other.segment_lengths
            && self.nodes.len() == other.nodes.len()
            && self
                .nodes
                .iter()
                .zip(&other.nodes)
                .all(|(a, b)| a.code == b.code && a.parent == b.parent && a.label == b.label)
    }
}

impl HierarchyTree {
    /// Builds a tree from full-depth leaf codes. Duplicates are merged.
    pub fn build<I, S>(leaf_codes: I, segment_lengths: &[usize]) -> Result<Self, HierarchyError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self::build_labeled(
            leaf_codes.into_iter().map(|c| (c.as_ref().to_string(), None)),
            segment_lengths,
        )
    }

    /// Like [`HierarchyTree::build`], with an optional human label per leaf.
    pub fn build_labeled<I>(entries: I, segment_lengths: &[usize]) -> Result<Self, HierarchyError>
    where
        I: IntoIterator<Item = (String, Option<String>)>,
    {
        Self::build_inner(entries, segment_lengths, false)
    }

    /// Accepts codes that stop early at any segment boundary, producing an
    /// unbalanced tree. Shorter codes that are extended by other codes are
    /// plain internal nodes.
    pub fn build_unbalanced<I, S>(codes: I, segment_lengths: &[usize]) -> Result<Self, HierarchyError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self::build_inner(
            codes.into_iter().map(|c| (c.as_ref().to_string(), None)),
            segment_lengths,
            true,
        )
    }

    fn build_inner<I>(
        entries: I,
        segment_lengths: &[usize],
        allow_short: bool,
    ) -> Result<Self, HierarchyError>
    where
        I: IntoIterator<Item = (String, Option<String>)>,
    {
        if segment_lengths.is_empty() || segment_lengths.contains(&0) {
            return Err(HierarchyError::BadSegments(segment_lengths.to_vec()));
        }
        let depth = segment_lengths.len();
        let mut codes: BTreeMap<ClassCode, Option<String>> = BTreeMap::new();
        for (raw, label) in entries {
            let raw = raw.trim();
            let code = ClassCode::parse(raw, segment_lengths)?;
            if !allow_short && code.level() != depth {
                return Err(HierarchyError::MalformedCode {
                    code: raw.to_string(),
                    reason: format!(
                        "expected {} characters",
                        segment_lengths.iter().sum::<usize>()
                    ),
                });
            }
            let slot = codes.entry(code).or_insert(None);
            if slot.is_none() {
                *slot = label;
            }
        }
        if codes.is_empty() {
            return Err(HierarchyError::EmptyInput);
        }

        // Every prefix becomes a node; BTreeSet per level gives code order.
        let mut per_level: Vec<BTreeSet<ClassCode>> = vec![BTreeSet::new(); depth];
        for code in codes.keys() {
            for l in 1..=code.level() {
                per_level[l - 1].insert(code.prefix(l));
            }
        }

        let mut nodes = vec![Node {
            code: ClassCode::root(),
            parent: None,
            children: Vec::new(),
            label: None,
        }];
        let mut index = HashMap::new();
        index.insert(ClassCode::root(), NodeId(0));
        let mut levels = Vec::with_capacity(depth);
        let mut alphabet = vec![BTreeSet::new(); depth];
        for (l, level_codes) in per_level.into_iter().enumerate() {
            let mut ids = Vec::with_capacity(level_codes.len());
            for code in level_codes {
                let parent = index[&code.parent().expect("non-root")];
                let id = NodeId(nodes.len());
                alphabet[l].extend(code.last_segment().unwrap_or("").chars());
                nodes[parent.0].children.push(id);
                let label = codes.get(&code).cloned().flatten();
                index.insert(code.clone(), id);
                nodes.push(Node {
                    code,
                    parent: Some(parent),
                    children: Vec::new(),
                    label,
                });
                ids.push(id);
            }
            levels.push(ids);
        }
        let mut leaves: Vec<NodeId> = (1..nodes.len())
            .filter(|&i| nodes[i].children.is_empty())
            .map(NodeId)
            .collect();
        leaves.sort_by(|a, b| nodes[a.0].code.cmp(&nodes[b.0].code));

        Ok(HierarchyTree {
            segment_lengths: segment_lengths.to_vec(),
            nodes,
            index,
            levels,
            leaves,
            alphabet,
        })
    }

    /// Parses a hierarchy file body: one leaf code per line, optionally
    /// followed by a tab and a label. Blank lines and `#` comments are skipped.
    pub fn parse_hierarchy_text(text: &str, segment_lengths: &[usize]) -> Result<Self, HierarchyError> {
        let entries = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .map(|line| match line.split_once('\t') {
                Some((code, label)) => {
                    let label = label.trim();
                    (
                        code.trim().to_string(),
                        (!label.is_empty()).then(|| label.to_string()),
                    )
                }
                None => (line.trim().to_string(), None),
            });
        Self::build_labeled(entries, segment_lengths)
    }

    pub fn from_hierarchy_file(path: &Path, segment_lengths: &[usize]) -> Result<Self, HierarchyError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HierarchyError::Io(format!("{}: {e}", path.display())))?;
        Self::parse_hierarchy_text(&text, segment_lengths)
    }

    /// Renders the tree back into hierarchy-file form.
    pub fn to_hierarchy_text(&self) -> String {
        let mut out = String::new();
        for &id in &self.leaves {
            let node = &self.nodes[id.0];
            out.push_str(node.code.as_str());
            if let Some(label) = &node.label {
                out.push('\t');
                out.push_str(label);
            }
            out.push('\n');
        }
        out
    }

    pub fn segment_lengths(&self) -> &[usize] {
        &self.segment_lengths
    }

    pub fn level_count(&self) -> usize {
        self.segment_lengths.len()
    }

    /// Character length of codes at each level, e.g. `[1, 2, 3, 4, 6]`.
    pub fn digit_lengths(&self) -> Vec<usize> {
        self.segment_lengths
            .iter()
            .scan(0, |acc, &w| {
                *acc += w;
                Some(*acc)
            })
            .collect()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    /// True when every leaf sits at the deepest level.
    pub fn is_balanced(&self) -> bool {
        let depth = self.level_count();
        self.leaves
            .iter()
            .all(|id| self.nodes[id.0].code.level() == depth)
    }

    /// Parses `s` and checks every segment against the symbols observed at
    /// its level. The code need not be a node of the tree.
    pub fn parse_code(&self, s: &str) -> Result<ClassCode, HierarchyError> {
        let code = ClassCode::parse(s, &self.segment_lengths)?;
        for (l, seg) in code.segments().enumerate() {
            if let Some(c) = seg.chars().find(|c| !self.alphabet[l].contains(c)) {
                return Err(HierarchyError::MalformedCode {
                    code: s.to_string(),
                    reason: format!("symbol {c:?} never occurs at level {}", l + 1),
                });
            }
        }
        Ok(code)
    }

    /// Parses `s` and requires it to name a node.
    pub fn lookup(&self, s: &str) -> Result<ClassCode, HierarchyError> {
        let code = self.parse_code(s)?;
        if self.contains(&code) {
            Ok(code)
        } else {
            Err(HierarchyError::UnknownCode(s.to_string()))
        }
    }

    pub fn contains(&self, code: &ClassCode) -> bool {
        self.index.contains_key(code)
    }

    pub fn is_leaf(&self, code: &ClassCode) -> bool {
        self.index
            .get(code)
            .is_some_and(|id| id.0 != 0 && self.nodes[id.0].children.is_empty())
    }

    /// Codes of all prefixes from level 1 to the code itself.
    pub fn ancestor_path(&self, code: &ClassCode) -> Result<Vec<ClassCode>, HierarchyError> {
        if code.is_root() || !self.contains(code) {
            return Err(HierarchyError::UnknownCode(code.to_string()));
        }
        Ok(code.ancestors_inclusive())
    }

    /// All node codes at `level`, in code order.
    pub fn level_nodes(&self, level: usize) -> Result<Vec<ClassCode>, HierarchyError> {
        self.check_level(level)?;
        Ok(self.levels[level - 1]
            .iter()
            .map(|id| self.nodes[id.0].code.clone())
            .collect())
    }

    pub(crate) fn check_level(&self, level: usize) -> Result<(), HierarchyError> {
        if level == 0 || level > self.level_count() {
            Err(HierarchyError::LevelOutOfRange {
                level,
                max: self.level_count(),
            })
        } else {
            Ok(())
        }
    }

    /// Leaf codes in canonical (code) order.
    pub fn leaf_codes(&self) -> Vec<ClassCode> {
        self.leaves
            .iter()
            .map(|id| self.nodes[id.0].code.clone())
            .collect()
    }

    pub fn children(&self, code: &ClassCode) -> Result<Vec<ClassCode>, HierarchyError> {
        let id = self.id_of(code)?;
        Ok(self.nodes[id.0]
            .children
            .iter()
            .map(|c| self.nodes[c.0].code.clone())
            .collect())
    }

    pub fn label(&self, code: &ClassCode) -> Option<&str> {
        self.index
            .get(code)
            .and_then(|id| self.nodes[id.0].label.as_deref())
    }

    /// Number of leaves in the subtree rooted at `code`.
    pub fn leaf_descendant_count(&self, code: &ClassCode) -> Result<usize, HierarchyError> {
        let id = self.id_of(code)?;
        let mut stack = vec![id];
        let mut count = 0;
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n.0];
            if node.children.is_empty() {
                count += 1;
            } else {
                stack.extend(node.children.iter().copied());
            }
        }
        Ok(count)
    }

    /// Codes of nodes that have children, root first, then in id order.
    pub fn internal_codes(&self) -> Vec<ClassCode> {
        self.nodes
            .iter()
            .filter(|n| !n.children.is_empty())
            .map(|n| n.code.clone())
            .collect()
    }

    pub(crate) fn id_of(&self, code: &ClassCode) -> Result<NodeId, HierarchyError> {
        self.index
            .get(code)
            .copied()
            .ok_or_else(|| HierarchyError::UnknownCode(code.to_string()))
    }

    pub(crate) fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub(crate) fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub(crate) fn leaf_ids(&self) -> &[NodeId] {
        &self.leaves
    }

    pub(crate) fn level_ids(&self, level: usize) -> &[NodeId] {
        &self.levels[level - 1]
    }
}

#[derive(Serialize, Deserialize)]
struct TreeRepr {
    segment_lengths: Vec<usize>,
    unbalanced: bool,
    leaves: Vec<(String, Option<String>)>,
}

impl From<HierarchyTree> for TreeRepr {
    fn from(tree: HierarchyTree) -> Self {
        TreeRepr {
            unbalanced: !tree.is_balanced(),
            leaves: tree
                .leaves
                .iter()
                .map(|id| {
                    let n = &tree.nodes[id.0];
                    (n.code.to_string(), n.label.clone())
                })
                .collect(),
            segment_lengths: tree.segment_lengths,
        }
    }
}

impl TryFrom<TreeRepr> for HierarchyTree {
    type Error = HierarchyError;

    fn try_from(repr: TreeRepr) -> Result<Self, Self::Error> {
        HierarchyTree::build_inner(repr.leaves, &repr.segment_lengths, repr.unbalanced)
    }
}
