//! The probabilistic decision tree used as the dialog policy: construction,
//! reduced-error pruning, retraining from supervisor feedback, and mass-propagating
//! classification.

mod build;
pub(crate) mod classify;
mod prune;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ClassCounts, DatasetError, Schema, Split, MISSING_TOKEN};
use crate::scalar::Scalar;

pub use build::{induce_tree, retrain_with_feedback, train_tree, CaseSource};
pub use classify::{classify_example, follow_path, Classification, Routing};
pub use prune::{holdout_split, prune_tree};

pub type NodeId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InductionError {
    #[error("cannot induce a tree from an empty dataset")]
    EmptyDataset,
    #[error("holdout split leaves no holdout examples")]
    EmptyHoldout,
    #[error("invalid induction config: {0}")]
    InvalidConfig(String),
    #[error("verification references unknown session `{0}`")]
    UnknownSession(String),
    #[error("verification label `{0}` is not a known class")]
    UnknownLabel(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Pruning {
    None,
    ReducedError { holdout_fraction: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InductionConfig {
    pub min_leaf_examples: usize,
    /// `None` means unlimited depth.
    pub max_depth: Option<usize>,
    pub pruning: Pruning,
}

impl Default for InductionConfig {
    fn default() -> Self {
        Self {
            min_leaf_examples: 1,
            max_depth: None,
            pruning: Pruning::None,
        }
    }
}

impl InductionConfig {
    pub fn validate(&self) -> Result<(), InductionError> {
        if self.min_leaf_examples == 0 {
            return Err(InductionError::InvalidConfig(
                "min_leaf_examples must be positive".into(),
            ));
        }
        if self.max_depth == Some(0) {
            return Err(InductionError::InvalidConfig(
                "max_depth must be positive".into(),
            ));
        }
        if let Pruning::ReducedError {
            holdout_fraction, ..
        } = self.pruning
        {
            if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
                return Err(InductionError::InvalidConfig(format!(
                    "holdout fraction {holdout_fraction} is outside (0, 1)"
                )));
            }
        }
        Ok(())
    }
}

/// Label on the edge from a node to one of its children.
///
/// The text form is `=value`, `<=t`, `>t` or `?`, and edges of a node are kept
/// sorted by that text.
#[derive(Debug, Clone, PartialEq)]
pub enum EdgeKey {
    Value(String),
    AtMost(f64),
    Above(f64),
    Missing,
}

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeKey::Value(v) => write!(f, "={v}"),
            EdgeKey::AtMost(t) => write!(f, "<={t}"),
            EdgeKey::Above(t) => write!(f, ">{t}"),
            EdgeKey::Missing => f.write_str(MISSING_TOKEN),
        }
    }
}

impl FromStr for EdgeKey {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| format!("bad threshold in edge key `{s}`"))
        };
        if s == MISSING_TOKEN {
            Ok(EdgeKey::Missing)
        } else if let Some(t) = s.strip_prefix("<=") {
            Ok(EdgeKey::AtMost(num(t)?))
        } else if let Some(t) = s.strip_prefix('>') {
            Ok(EdgeKey::Above(num(t)?))
        } else if let Some(v) = s.strip_prefix('=') {
            Ok(EdgeKey::Value(v.to_string()))
        } else {
            Err(format!("unrecognized edge key `{s}`"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub key: EdgeKey,
    pub child: NodeId,
    /// Training examples that followed this edge.
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeBody {
    Leaf {
        majority_class: String,
    },
    Internal {
        attribute: String,
        split: Split,
        edges: Vec<Edge>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: NodeId,
    pub counts: ClassCounts,
    pub body: NodeBody,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self.body, NodeBody::Leaf { .. })
    }

    pub fn attribute(&self) -> Option<&str> {
        match &self.body {
            NodeBody::Internal { attribute, .. } => Some(attribute),
            NodeBody::Leaf { .. } => None,
        }
    }

    pub fn edges(&self) -> &[Edge] {
        match &self.body {
            NodeBody::Internal { edges, .. } => edges,
            NodeBody::Leaf { .. } => &[],
        }
    }

    /// `support / counts.total` for the edge at `index`.
    pub fn edge_probability<T: Scalar>(&self, index: usize) -> T {
        let total: u64 = self.edges().iter().map(|e| e.support).sum();
        T::from_count(self.edges()[index].support) / T::from_count(total)
    }

    /// Index of the edge with the largest support; ties go to the first edge.
    pub fn max_probability_edge(&self) -> Option<usize> {
        let edges = self.edges();
        if edges.is_empty() {
            return None;
        }
        let mut best = 0;
        for (i, e) in edges.iter().enumerate() {
            if e.support > edges[best].support {
                best = i;
            }
        }
        Some(best)
    }

    /// Class distribution of the training examples that reached this node.
    pub fn distribution<T: Scalar>(&self) -> Vec<T> {
        let total = T::from_count(self.counts.total().max(1));
        self.counts
            .counts()
            .iter()
            .map(|&c| T::from_count(c) / total)
            .collect()
    }
}

/// A decision tree over a schema. Nodes are stored in preorder; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub(crate) nodes: Vec<TreeNode>,
    pub(crate) schema: Schema,
    pub(crate) classes: Vec<String>,
    pub(crate) version: u64,
    pub(crate) source_fingerprint: String,
}

impl DecisionTree {
    /// Assembles a tree from parts, checking structural invariants.
    pub fn from_parts(
        nodes: Vec<TreeNode>,
        schema: Schema,
        classes: Vec<String>,
        version: u64,
        source_fingerprint: String,
    ) -> Result<Self, String> {
        let tree = Self {
            nodes,
            schema,
            classes,
            version,
            source_fingerprint,
        };
        tree.check()?;
        Ok(tree)
    }

    fn check(&self) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        if self.classes.is_empty() {
            return Err("tree has no classes".into());
        }
        let mut parents = vec![0usize; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return Err(format!("node at position {i} has id {}", n.id));
            }
            if n.counts.n_classes() != self.classes.len() {
                return Err(format!("node {i} counts do not match the class list"));
            }
            if n.counts.total() == 0 {
                return Err(format!("node {i} has no training support"));
            }
            match &n.body {
                NodeBody::Leaf { majority_class } => {
                    if self.classes.get(n.counts.majority()) != Some(majority_class) {
                        return Err(format!("leaf {i} majority class is inconsistent"));
                    }
                }
                NodeBody::Internal {
                    attribute,
                    split,
                    edges,
                } => {
                    let (_, a) = self
                        .schema
                        .lookup(attribute)
                        .map_err(|e| format!("node {i}: {e}"))?;
                    match (split, a.is_numeric()) {
                        (Split::Threshold(_), true) | (Split::Categorical, false) => {}
                        _ => return Err(format!("node {i} split kind does not match `{attribute}`")),
                    }
                    if edges.is_empty() {
                        return Err(format!("internal node {i} has no edges"));
                    }
                    let support: u64 = edges.iter().map(|e| e.support).sum();
                    if support != n.counts.total() {
                        return Err(format!("node {i} edge support does not sum to its count"));
                    }
                    for e in edges {
                        if e.child <= i || e.child >= self.nodes.len() {
                            return Err(format!("node {i} has an out-of-order child {}", e.child));
                        }
                        if e.support == 0 {
                            return Err(format!("node {i} has a zero-support edge"));
                        }
                        parents[e.child] += 1;
                    }
                    let mut keys: Vec<String> = edges.iter().map(|e| e.key.to_string()).collect();
                    let sorted = {
                        let mut s = keys.clone();
                        s.sort();
                        s
                    };
                    if keys != sorted {
                        return Err(format!("node {i} edges are not sorted"));
                    }
                    keys.dedup();
                    if keys.len() != edges.len() {
                        return Err(format!("node {i} repeats an edge key"));
                    }
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return Err("nodes do not form a tree".into());
        }
        Ok(())
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn source_fingerprint(&self) -> &str {
        &self.source_fingerprint
    }

    /// Same tree under a different version number.
    pub fn with_version(mut self, version: u64) -> Self {
        self.version = version;
        self
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Longest root-to-leaf path, in edges.
    pub fn height(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut h = 0;
        for n in &self.nodes {
            for e in n.edges() {
                depth[e.child] = depth[n.id] + 1;
                h = h.max(depth[e.child]);
            }
        }
        h
    }

    /// Root-to-leaf paths as lists of node ids.
    pub fn paths(&self) -> Vec<Vec<NodeId>> {
        let mut out = Vec::new();
        let mut stack = vec![vec![0]];
        while let Some(path) = stack.pop() {
            let last = *path.last().expect("paths are non-empty");
            let node = &self.nodes[last];
            if node.is_leaf() {
                out.push(path);
            } else {
                for e in node.edges().iter().rev() {
                    let mut p = path.clone();
                    p.push(e.child);
                    stack.push(p);
                }
            }
        }
        out
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }
}
