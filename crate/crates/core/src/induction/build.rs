use std::collections::{BTreeMap, HashMap};

use super::{
    prune_tree, DecisionTree, Edge, EdgeKey, InductionConfig, InductionError, NodeBody, Pruning,
    TreeNode,
};
use crate::dataset::{
    best_split_among, AttributeKind, AttributeValue, ClassCounts, Dataset, DatasetError, Example,
    Split, View,
};
use crate::persistence::VerificationRecord;

/// Looks up the attribute values a completed dialog collected, in schema order.
pub trait CaseSource {
    fn case(&self, session_id: &str) -> Option<Vec<AttributeValue>>;
}

impl CaseSource for BTreeMap<String, Vec<AttributeValue>> {
    fn case(&self, session_id: &str) -> Option<Vec<AttributeValue>> {
        self.get(session_id).cloned()
    }
}

impl CaseSource for HashMap<String, Vec<AttributeValue>> {
    fn case(&self, session_id: &str) -> Option<Vec<AttributeValue>> {
        self.get(session_id).cloned()
    }
}

struct Builder<'a> {
    dataset: &'a Dataset,
    config: &'a InductionConfig,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    fn leaf(&mut self, id: usize, counts: ClassCounts) {
        let majority_class = self.dataset.classes()[counts.majority()].clone();
        self.nodes[id] = TreeNode {
            id,
            counts,
            body: NodeBody::Leaf { majority_class },
        };
    }

    fn grow(&mut self, view: View<'_>, available: &[usize], depth: usize) -> usize {
        let counts = view.class_counts();
        let id = self.nodes.len();
        self.nodes.push(TreeNode {
            id,
            counts: counts.clone(),
            body: NodeBody::Leaf {
                majority_class: String::new(),
            },
        });

        let depth_reached = self.config.max_depth.is_some_and(|d| depth >= d);
        if counts.is_pure()
            || available.is_empty()
            || view.len() < self.config.min_leaf_examples
            || depth_reached
        {
            self.leaf(id, counts);
            return id;
        }
        let choice = match best_split_among::<f64>(&view, available) {
            Ok(c) => c,
            Err(DatasetError::NoInformativeSplit) => {
                self.leaf(id, counts);
                return id;
            }
            Err(e) => unreachable!("non-empty view and attributes: {e}"),
        };

        let attr = self.dataset.schema().get(choice.attribute);
        let mut branches: Vec<(EdgeKey, Vec<usize>)> = match (&attr.kind, choice.split) {
            (AttributeKind::Categorical { values }, Split::Categorical) => {
                let mut by_value: Vec<Vec<usize>> = vec![Vec::new(); values.len() + 1];
                for i in 0..view.len() {
                    let b = match view.value(i, choice.attribute) {
                        AttributeValue::Category(c) => {
                            values.iter().position(|v| v == c).expect("validated value")
                        }
                        _ => values.len(),
                    };
                    by_value[b].push(i);
                }
                let missing = by_value.pop().expect("missing bucket");
                let mut out: Vec<(EdgeKey, Vec<usize>)> = values
                    .iter()
                    .cloned()
                    .map(EdgeKey::Value)
                    .zip(by_value)
                    .collect();
                out.push((EdgeKey::Missing, missing));
                out
            }
            (AttributeKind::Numeric { .. }, Split::Threshold(t)) => {
                let (mut low, mut high, mut missing) = (Vec::new(), Vec::new(), Vec::new());
                for i in 0..view.len() {
                    match view.value(i, choice.attribute).as_number() {
                        Some(x) if x <= t => low.push(i),
                        Some(_) => high.push(i),
                        None => missing.push(i),
                    }
                }
                // unknown values follow the better-supported side
                if high.len() > low.len() {
                    high.extend(missing);
                    high.sort_unstable();
                } else {
                    low.extend(missing);
                    low.sort_unstable();
                }
                vec![(EdgeKey::AtMost(t), low), (EdgeKey::Above(t), high)]
            }
            _ => unreachable!("best_split pairs split kinds with attribute kinds"),
        };
        branches.retain(|(_, rows)| !rows.is_empty());
        branches.sort_by_cached_key(|(k, _)| k.to_string());

        let child_available: Vec<usize> = match choice.split {
            Split::Categorical => available
                .iter()
                .copied()
                .filter(|&a| a != choice.attribute)
                .collect(),
            Split::Threshold(_) => available.to_vec(),
        };

        let mut edges = Vec::with_capacity(branches.len());
        for (key, rows) in branches {
            let support = rows.len() as u64;
            let child = self.grow(view.restrict(&rows), &child_available, depth + 1);
            edges.push(Edge {
                key,
                child,
                support,
            });
        }
        self.nodes[id].body = NodeBody::Internal {
            attribute: choice.name,
            split: choice.split,
            edges,
        };
        id
    }
}

/// Greedy top-down induction: each node splits on the attribute with maximal
/// information gain until the node is pure, attributes run out, no split is
/// informative, too few examples remain, or the depth limit is hit.
pub fn induce_tree(
    dataset: &Dataset,
    config: &InductionConfig,
) -> Result<DecisionTree, InductionError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(InductionError::EmptyDataset);
    }
    let mut b = Builder {
        dataset,
        config,
        nodes: Vec::new(),
    };
    let available: Vec<usize> = (0..dataset.schema().len()).collect();
    b.grow(dataset.view(), &available, 0);
    Ok(DecisionTree {
        nodes: b.nodes,
        schema: dataset.schema().clone(),
        classes: dataset.classes().to_vec(),
        version: 1,
        source_fingerprint: dataset.fingerprint(),
    })
}

/// Induces a tree and, when the config asks for it, prunes it against a seeded
/// holdout split of `dataset` (the tree is grown on the remaining examples).
pub fn train_tree(
    dataset: &Dataset,
    config: &InductionConfig,
) -> Result<DecisionTree, InductionError> {
    config.validate()?;
    match config.pruning {
        Pruning::None => induce_tree(dataset, config),
        Pruning::ReducedError {
            holdout_fraction,
            seed,
        } => {
            let (train, holdout) = super::holdout_split(dataset.len(), holdout_fraction, seed);
            if holdout.is_empty() {
                return Err(InductionError::EmptyHoldout);
            }
            let grown = induce_tree(&dataset.select(&train), config)?;
            prune_tree(&grown, dataset, config)
        }
    }
}

/// Turns each verification into a training example (collected values, unanswered
/// attributes missing, the operator's label), appends them, and retrains.
/// The result carries `previous_version + 1`.
pub fn retrain_with_feedback(
    dataset: &Dataset,
    verifications: &[VerificationRecord],
    cases: &dyn CaseSource,
    config: &InductionConfig,
    previous_version: u64,
) -> Result<DecisionTree, InductionError> {
    let mut augmented = dataset.clone();
    for v in verifications {
        if dataset.class_index(&v.corrected_label).is_none() {
            return Err(InductionError::UnknownLabel(v.corrected_label.clone()));
        }
        let values = cases
            .case(&v.session_id)
            .ok_or_else(|| InductionError::UnknownSession(v.session_id.clone()))?;
        augmented.push(Example {
            values,
            label: v.corrected_label.clone(),
        })?;
    }
    let tree = train_tree(&augmented, config)?;
    Ok(tree.with_version(previous_version + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::{figure1, figure1_schema};
    use crate::dataset::{AttributeSchema, Schema};
    use crate::induction::classify_example;

    #[test]
    fn figure1_tree_shape() {
        let ds = figure1();
        let tree = induce_tree(&ds, &InductionConfig::default()).unwrap();
        assert_eq!(tree.root().attribute(), Some("Bankruptcy"));
        let no_edge = tree
            .root()
            .edges()
            .iter()
            .find(|e| e.key == EdgeKey::Value("no".into()))
            .unwrap();
        let leaf = tree.node(no_edge.child);
        assert!(leaf.is_leaf());
        assert!(leaf.counts.is_pure());
        assert_eq!(
            leaf.body,
            NodeBody::Leaf {
                majority_class: "yes".into()
            }
        );
        // Bankruptcy=yes separates on Savings at the midpoint of 5000 and 100000
        let yes_edge = &tree.root().edges()[1];
        assert_eq!(yes_edge.key, EdgeKey::Value("yes".into()));
        let n = tree.node(yes_edge.child);
        assert_eq!(n.attribute(), Some("Savings"));
        assert!(matches!(
            n.body,
            NodeBody::Internal {
                split: Split::Threshold(t),
                ..
            } if t == 52_500.0
        ));
        assert_eq!(tree.version(), 1);
        assert_eq!(tree.height(), 2);
        assert_eq!(tree.node_count(), 5);
    }

    #[test]
    fn single_class_gives_single_leaf() {
        let ds = figure1().select(&[0, 2]);
        let tree = induce_tree(&ds, &InductionConfig::default()).unwrap();
        assert_eq!(tree.node_count(), 1);
        assert_eq!(tree.height(), 0);
    }

    #[test]
    fn perfect_binary_attribute_gives_depth_one() {
        let schema = Schema::new(vec![
            AttributeSchema::categorical("A", &["t", "f"], "A?"),
            AttributeSchema::categorical("B", &["t", "f"], "B?"),
        ])
        .unwrap();
        let ex = |a: &str, b: &str, l: &str| Example {
            values: vec![AttributeValue::category(a), AttributeValue::category(b)],
            label: l.into(),
        };
        let ds = Dataset::new(
            schema,
            vec!["p".into(), "n".into()],
            vec![ex("t", "t", "p"), ex("t", "f", "p"), ex("f", "t", "n"), ex("f", "f", "n")],
        )
        .unwrap();
        let tree = induce_tree(&ds, &InductionConfig::default()).unwrap();
        assert_eq!(tree.height(), 1);
        assert_eq!(tree.root().attribute(), Some("A"));
        assert_eq!(tree.leaf_count(), 2);
        assert!(tree.nodes().iter().filter(|n| n.is_leaf()).all(|n| n.counts.is_pure()));
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let ds = Dataset::empty(figure1_schema(), vec!["yes".into()]).unwrap();
        assert_eq!(
            induce_tree(&ds, &InductionConfig::default()),
            Err(InductionError::EmptyDataset)
        );
    }

    #[test]
    fn depth_and_leaf_size_limits() {
        let ds = figure1();
        let shallow = InductionConfig {
            max_depth: Some(1),
            ..Default::default()
        };
        assert_eq!(induce_tree(&ds, &shallow).unwrap().height(), 1);
        let big_leaves = InductionConfig {
            min_leaf_examples: 4,
            ..Default::default()
        };
        assert_eq!(induce_tree(&ds, &big_leaves).unwrap().node_count(), 1);
    }

    #[test]
    fn missing_numeric_values_follow_majority_side() {
        // Years: 1 (yes), 2 (yes), 10 (no), ? (no) -> the missing row joins "<=" (2 vs 1)
        let schema = Schema::new(vec![AttributeSchema::numeric("Years", None, "Years?")]).unwrap();
        let ex = |y: AttributeValue, l: &str| Example {
            values: vec![y],
            label: l.into(),
        };
        use AttributeValue::*;
        let ds = Dataset::new(
            schema,
            vec!["yes".into(), "no".into()],
            vec![
                ex(Number(1.0), "yes"),
                ex(Number(2.0), "yes"),
                ex(Number(10.0), "no"),
                ex(Missing, "no"),
            ],
        )
        .unwrap();
        let tree = induce_tree(&ds, &InductionConfig::default()).unwrap();
        let supports: Vec<u64> = tree.root().edges().iter().map(|e| e.support).collect();
        assert_eq!(supports, vec![3, 1]);
    }

    #[test]
    fn retrain_without_feedback_only_bumps_version() {
        let ds = figure1();
        let cfg = InductionConfig::default();
        let base = induce_tree(&ds, &cfg).unwrap();
        let cases: BTreeMap<String, Vec<AttributeValue>> = BTreeMap::new();
        let next = retrain_with_feedback(&ds, &[], &cases, &cfg, base.version()).unwrap();
        assert_eq!(next.version(), 2);
        assert_eq!(next.with_version(1), base);
    }

    fn record(session: &str, label: &str) -> VerificationRecord {
        VerificationRecord {
            session_id: session.into(),
            operator_id: "op".into(),
            original_label: "yes".into(),
            corrected_label: label.into(),
            applied_in_version: None,
            created_at: 0,
        }
    }

    #[test]
    fn two_relabels_flip_a_unique_leaf() {
        let ds = figure1();
        let cfg = InductionConfig::default();
        let base = induce_tree(&ds, &cfg).unwrap();
        let case = ds.examples()[2].values.clone();
        let before = classify_example::<f64>(&base, &case).unwrap();
        assert_eq!(before.class, "yes");

        let cases: BTreeMap<String, Vec<AttributeValue>> =
            [("s1".to_string(), case.clone()), ("s2".to_string(), case.clone())]
                .into_iter()
                .collect();
        let feedback = [record("s1", "no"), record("s2", "no")];
        let next = retrain_with_feedback(&ds, &feedback, &cases, &cfg, 1).unwrap();
        let after = classify_example::<f64>(&next, &case).unwrap();
        assert_eq!(after.class, "no");
        assert_eq!(next.version(), 2);
    }

    #[test]
    fn retrain_errors() {
        let ds = figure1();
        let cfg = InductionConfig::default();
        let cases: BTreeMap<String, Vec<AttributeValue>> =
            [("s1".to_string(), ds.examples()[0].values.clone())]
                .into_iter()
                .collect();
        assert_eq!(
            retrain_with_feedback(&ds, &[record("s1", "unsure")], &cases, &cfg, 1),
            Err(InductionError::UnknownLabel("unsure".into()))
        );
        assert_eq!(
            retrain_with_feedback(&ds, &[record("nope", "no")], &cases, &cfg, 1),
            Err(InductionError::UnknownSession("nope".into()))
        );
    }
}
