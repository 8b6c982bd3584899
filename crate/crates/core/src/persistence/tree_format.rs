use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::StoreError;
use crate::dataset::{ClassCounts, Schema, Split};
use crate::induction::{DecisionTree, Edge, EdgeKey, NodeBody, NodeId, TreeNode};

pub const TREE_FORMAT: &str = "dtdialog-tree/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum NodeDoc {
    Leaf {
        id: NodeId,
        counts: ClassCounts,
        class: String,
    },
    Internal {
        id: NodeId,
        counts: ClassCounts,
        attribute: String,
        split: Split,
        /// Edge text (`=v`, `<=t`, `>t`, `?`) to child id.
        children: BTreeMap<String, NodeId>,
        edge_support: BTreeMap<String, u64>,
    },
}

/// The on-disk tree. The digest is the SHA-256 of the compact JSON encoding
/// of the same document with an empty digest field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDocument {
    format: String,
    version: u64,
    source_fingerprint: String,
    classes: Vec<String>,
    schema: Schema,
    nodes: Vec<NodeDoc>,
    digest: String,
}

impl TreeDocument {
    pub fn from_tree(tree: &DecisionTree) -> Self {
        let nodes = tree
            .nodes()
            .iter()
            .map(|n| match &n.body {
                NodeBody::Leaf { majority_class } => NodeDoc::Leaf {
                    id: n.id,
                    counts: n.counts.clone(),
                    class: majority_class.clone(),
                },
                NodeBody::Internal {
                    attribute,
                    split,
                    edges,
                } => NodeDoc::Internal {
                    id: n.id,
                    counts: n.counts.clone(),
                    attribute: attribute.clone(),
                    split: *split,
                    children: edges.iter().map(|e| (e.key.to_string(), e.child)).collect(),
                    edge_support: edges.iter().map(|e| (e.key.to_string(), e.support)).collect(),
                },
            })
            .collect();
        let mut doc = Self {
            format: TREE_FORMAT.to_string(),
            version: tree.version(),
            source_fingerprint: tree.source_fingerprint().to_string(),
            classes: tree.classes().to_vec(),
            schema: tree.schema().clone(),
            nodes,
            digest: String::new(),
        };
        doc.digest = doc.compute_digest();
        doc
    }

    fn compute_digest(&self) -> String {
        let mut bare = self.clone();
        bare.digest.clear();
        let bytes = serde_json::to_vec(&bare).expect("tree document serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Pretty JSON, newline-terminated.
    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("tree document serializes");
        s.push('\n');
        s
    }

    /// Parses and verifies a stored document. `version` is only used for errors.
    pub fn parse(text: &str, version: u64) -> Result<Self, StoreError> {
        let doc: Self = serde_json::from_str(text).map_err(|e| StoreError::Corrupt {
            what: format!("tree v{version}"),
            reason: e.to_string(),
        })?;
        if doc.format != TREE_FORMAT {
            return Err(StoreError::Corrupt {
                what: format!("tree v{version}"),
                reason: format!("unsupported format `{}`", doc.format),
            });
        }
        if doc.compute_digest() != doc.digest {
            return Err(StoreError::DigestMismatch { version });
        }
        Ok(doc)
    }

    pub fn into_tree(self) -> Result<DecisionTree, StoreError> {
        let corrupt = |reason: String| StoreError::Corrupt {
            what: format!("tree v{}", self.version),
            reason,
        };
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            nodes.push(match n {
                NodeDoc::Leaf { id, counts, class } => TreeNode {
                    id: *id,
                    counts: counts.clone(),
                    body: NodeBody::Leaf {
                        majority_class: class.clone(),
                    },
                },
                NodeDoc::Internal {
                    id,
                    counts,
                    attribute,
                    split,
                    children,
                    edge_support,
                } => {
                    if children.len() != edge_support.len() {
                        return Err(corrupt(format!("node {id}: children and support differ")));
                    }
                    let mut edges = Vec::with_capacity(children.len());
                    for (key, &child) in children {
                        let support = *edge_support
                            .get(key)
                            .ok_or_else(|| corrupt(format!("node {id}: no support for `{key}`")))?;
                        edges.push(Edge {
                            key: key.parse::<EdgeKey>().map_err(corrupt)?,
                            child,
                            support,
                        });
                    }
                    TreeNode {
                        id: *id,
                        counts: counts.clone(),
                        body: NodeBody::Internal {
                            attribute: attribute.clone(),
                            split: *split,
                            edges,
                        },
                    }
                }
            });
        }
        DecisionTree::from_parts(
            nodes,
            self.schema.clone(),
            self.classes.clone(),
            self.version,
            self.source_fingerprint.clone(),
        )
        .map_err(corrupt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::figure1;
    use crate::induction::{induce_tree, InductionConfig};

    #[test]
    fn round_trip_is_structural_identity() {
        let tree = induce_tree(&figure1(), &InductionConfig::default()).unwrap();
        let text = TreeDocument::from_tree(&tree).to_text();
        let back = TreeDocument::parse(&text, 1).unwrap().into_tree().unwrap();
        assert_eq!(back, tree);
        assert!(text.contains("\"<=52500\": 3"));
    }

    #[test]
    fn tampering_is_detected() {
        let tree = induce_tree(&figure1(), &InductionConfig::default()).unwrap();
        let text = TreeDocument::from_tree(&tree).to_text();
        let tampered = text.replacen("52500", "52501", 1);
        assert!(matches!(
            TreeDocument::parse(&tampered, 1),
            Err(StoreError::DigestMismatch { version: 1 })
        ));
        assert!(matches!(
            TreeDocument::parse("{", 1),
            Err(StoreError::Corrupt { .. })
        ));
    }
}
