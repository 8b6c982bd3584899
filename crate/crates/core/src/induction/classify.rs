use serde::{Deserialize, Serialize};

use super::{DecisionTree, EdgeKey, InductionError, NodeBody, NodeId};
use crate::dataset::{AttributeValue, Split};
use crate::scalar::Scalar;

/// How a value at an internal node selects among the node's edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Routing {
    /// The value matches the edge at this index.
    Matched(usize),
    /// The value is valid but no training example carried it here; the edge with
    /// the largest support is used instead.
    Unseen(usize),
    /// The value is missing and the node has no missing branch.
    Unknown,
}

impl DecisionTree {
    /// Routes `value` at internal node `node`.
    ///
    /// A missing value follows the node's `?` edge when training produced one;
    /// otherwise the caller decides how to spread it.
    pub fn route(&self, node: NodeId, value: &AttributeValue) -> Routing {
        let n = &self.nodes[node];
        let NodeBody::Internal { split, edges, .. } = &n.body else {
            panic!("route called on leaf {node}");
        };
        let fallback = || Routing::Unseen(n.max_probability_edge().expect("internal node has edges"));
        let find = |key: &EdgeKey| edges.iter().position(|e| &e.key == key);
        match (split, value) {
            (_, AttributeValue::Missing) => match find(&EdgeKey::Missing) {
                Some(i) => Routing::Matched(i),
                None => Routing::Unknown,
            },
            (Split::Threshold(t), AttributeValue::Number(x)) => {
                let key = if x <= t {
                    EdgeKey::AtMost(*t)
                } else {
                    EdgeKey::Above(*t)
                };
                find(&key).map_or_else(fallback, Routing::Matched)
            }
            (Split::Categorical, AttributeValue::Category(c)) => edges
                .iter()
                .position(|e| matches!(&e.key, EdgeKey::Value(v) if v == c))
                .map_or_else(fallback, Routing::Matched),
            // kind mismatches are rejected by schema validation before routing
            _ => fallback(),
        }
    }

    /// Schema position of the attribute asked at `node`.
    pub fn attribute_index(&self, node: NodeId) -> Option<usize> {
        self.nodes[node]
            .attribute()
            .and_then(|a| self.schema.position(a))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification<T> {
    pub class: String,
    pub probability: T,
    /// Aggregated class distribution, aligned with the tree's classes.
    pub distribution: Vec<T>,
    /// Leaves reached and the mass each received.
    pub leaves: Vec<(NodeId, T)>,
    /// Whether any unseen-value default edge was used.
    pub novel: bool,
}

/// Argmax of a distribution, first index on ties.
pub(crate) fn argmax<T: Scalar>(dist: &[T]) -> usize {
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = i;
        }
    }
    best
}

/// Builds a classification from leaf masses.
pub(crate) fn aggregate<T: Scalar>(
    tree: &DecisionTree,
    mut leaves: Vec<(NodeId, T)>,
    novel: bool,
) -> Classification<T> {
    leaves.sort_by_key(|&(id, _)| id);
    let mut dist = vec![T::zero(); tree.classes.len()];
    for &(id, mass) in &leaves {
        for (d, p) in dist.iter_mut().zip(tree.nodes[id].distribution::<T>()) {
            *d = *d + mass * p;
        }
    }
    let total: T = dist.iter().copied().sum();
    if total > T::zero() {
        for d in &mut dist {
            *d = *d / total;
        }
    }
    let best = argmax(&dist);
    Classification {
        class: tree.classes[best].clone(),
        probability: dist[best],
        distribution: dist,
        leaves,
        novel,
    }
}

/// Classifies a (possibly partial) case by pushing unit probability mass down
/// the tree. Known values send all mass along the matching edge; missing values
/// at nodes without a missing branch split mass by edge probability.
pub fn classify_example<T: Scalar>(
    tree: &DecisionTree,
    values: &[AttributeValue],
) -> Result<Classification<T>, InductionError> {
    tree.schema.validate_values(values)?;
    let mut novel = false;
    let mut leaves = Vec::new();
    let mut stack: Vec<(NodeId, T)> = vec![(0, T::one())];
    while let Some((id, mass)) = stack.pop() {
        let node = &tree.nodes[id];
        if node.is_leaf() {
            leaves.push((id, mass));
            continue;
        }
        let attr = tree.attribute_index(id).expect("internal node attribute in schema");
        match tree.route(id, &values[attr]) {
            Routing::Matched(e) => stack.push((node.edges()[e].child, mass)),
            Routing::Unseen(e) => {
                novel = true;
                stack.push((node.edges()[e].child, mass));
            }
            Routing::Unknown => {
                for (i, e) in node.edges().iter().enumerate() {
                    stack.push((e.child, mass * node.edge_probability::<T>(i)));
                }
            }
        }
    }
    Ok(aggregate(tree, leaves, novel))
}

/// Follows the single path selected by a case. Returns `None` when the path
/// reaches a node whose value is missing and that has no missing branch.
pub fn follow_path(tree: &DecisionTree, values: &[AttributeValue]) -> Option<NodeId> {
    let mut id = 0;
    loop {
        let node = &tree.nodes[id];
        let NodeBody::Internal {
            attribute,
            split,
            edges,
        } = &node.body
        else {
            return Some(id);
        };
        let value = &values[tree.schema.position(attribute)?];
        let wanted = match (split, value) {
            (_, AttributeValue::Missing) => EdgeKey::Missing,
            (Split::Threshold(t), AttributeValue::Number(x)) if x <= t => EdgeKey::AtMost(*t),
            (Split::Threshold(t), AttributeValue::Number(_)) => EdgeKey::Above(*t),
            (_, AttributeValue::Category(c)) => EdgeKey::Value(c.clone()),
            (Split::Categorical, AttributeValue::Number(_)) => return None,
        };
        id = match edges.iter().find(|e| e.key == wanted) {
            Some(e) => e.child,
            None if value.is_missing() => return None,
            None => edges[node.max_probability_edge()?].child,
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::figure1;
    use crate::induction::{induce_tree, InductionConfig};
    use approx::assert_abs_diff_eq;
    use AttributeValue::*;

    fn tree() -> DecisionTree {
        induce_tree(&figure1(), &InductionConfig::default()).unwrap()
    }

    #[test]
    fn full_example_reaches_pure_leaf() {
        let t = tree();
        let c = classify_example::<f64>(&t, &figure1().examples()[2].values).unwrap();
        assert_eq!(c.class, "yes");
        assert_eq!(c.probability, 1.0);
        assert!(!c.novel);
    }

    #[test]
    fn all_missing_gives_prior() {
        let t = tree();
        let c = classify_example::<f64>(&t, &[Missing, Missing, Missing, Missing]).unwrap();
        assert_eq!(c.class, "yes");
        assert_abs_diff_eq!(c.probability, 2.0 / 3.0, epsilon = 1e-12);
        let mass: f64 = c.leaves.iter().map(|l| l.1).sum();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn unseen_value_routes_to_max_support_child() {
        let ds = figure1().select(&[0, 1, 2]);
        let mut t = induce_tree(&ds, &InductionConfig::default()).unwrap();
        // drop the "=no" edge of the root to simulate an unseen value
        if let NodeBody::Internal { edges, .. } = &mut t.nodes[0].body {
            edges.remove(0);
        }
        let r = t.route(0, &Category("no".into()));
        assert_eq!(r, Routing::Unseen(0));
        let c = classify_example::<f64>(&t, &figure1().examples()[2].values).unwrap();
        assert!(c.novel);
    }

    #[test]
    fn follow_path_matches_mass_propagation() {
        let t = tree();
        for e in figure1().examples() {
            let mut v = e.values.clone();
            v[1] = Number(3.0);
            let leaf = follow_path(&t, &v).unwrap();
            let c = classify_example::<f64>(&t, &v).unwrap();
            assert_eq!(c.leaves, vec![(leaf, 1.0)]);
        }
    }

    #[test]
    fn f32_classification() {
        let t = tree();
        let c = classify_example::<f32>(&t, &[Missing, Missing, Missing, Missing]).unwrap();
        assert_abs_diff_eq!(c.probability, 2.0f32 / 3.0, epsilon = 1e-6);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let t = tree();
        assert!(classify_example::<f64>(&t, &[Missing]).is_err());
        assert!(classify_example::<f64>(
            &t,
            &[Category("maybe".into()), Missing, Missing, Missing]
        )
        .is_err());
    }
}
