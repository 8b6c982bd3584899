use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    classify_example, DecisionTree, InductionConfig, InductionError, NodeBody, NodeId, Pruning,
    TreeNode,
};
use crate::dataset::Dataset;

/// Seeded split of `n` row indices into (train, holdout); both come back sorted.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rows: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rows.shuffle(&mut rng);
    let k = ((n as f64) * fraction).round() as usize;
    let k = k.min(n);
    let mut holdout = rows[..k].to_vec();
    let mut train = rows[k..].to_vec();
    holdout.sort_unstable();
    train.sort_unstable();
    (train, holdout)
}

fn accuracy(tree: &DecisionTree, dataset: &Dataset, rows: &[usize]) -> usize {
    rows.iter()
        .filter(|&&r| {
            let e = &dataset.examples()[r];
            classify_example::<f64>(tree, &e.values)
                .map(|c| c.class == e.label)
                .unwrap_or(false)
        })
        .count()
}

fn collapse(tree: &mut DecisionTree, id: NodeId) {
    let majority_class = tree.classes[tree.nodes[id].counts.majority()].clone();
    tree.nodes[id].body = NodeBody::Leaf { majority_class };
}

/// Drops unreachable nodes and renumbers the rest in preorder.
fn compact(tree: &DecisionTree) -> DecisionTree {
    let mut nodes: Vec<TreeNode> = Vec::new();
    fn visit(tree: &DecisionTree, id: NodeId, out: &mut Vec<TreeNode>) -> NodeId {
        let new_id = out.len();
        let mut node = tree.nodes[id].clone();
        node.id = new_id;
        out.push(node);
        if let NodeBody::Internal { edges, .. } = &tree.nodes[id].body {
            let mut renumbered = edges.clone();
            for e in &mut renumbered {
                e.child = visit(tree, e.child, out);
            }
            if let NodeBody::Internal { edges, .. } = &mut out[new_id].body {
                *edges = renumbered;
            }
        }
        new_id
    }
    visit(tree, 0, &mut nodes);
    DecisionTree {
        nodes,
        ..tree.clone()
    }
}

/// Reduced-error pruning against the seeded holdout part of `dataset`.
///
/// Internal nodes are visited bottom-up; each is replaced by a leaf predicting its
/// training majority whenever holdout accuracy does not drop.
pub fn prune_tree(
    tree: &DecisionTree,
    dataset: &Dataset,
    config: &InductionConfig,
) -> Result<DecisionTree, InductionError> {
    let Pruning::ReducedError {
        holdout_fraction,
        seed,
    } = config.pruning
    else {
        return Err(InductionError::InvalidConfig(
            "pruning requires the reduced_error method".into(),
        ));
    };
    config.validate()?;
    let (_, holdout) = holdout_split(dataset.len(), holdout_fraction, seed);
    if holdout.is_empty() {
        return Err(InductionError::EmptyHoldout);
    }
    if tree.root().is_leaf() {
        return Ok(tree.clone());
    }

    let mut current = tree.clone();
    let mut best = accuracy(&current, dataset, &holdout);
    // preorder ids: descending id order visits children before parents
    for id in (0..current.nodes.len()).rev() {
        if current.nodes[id].is_leaf() {
            continue;
        }
        let mut candidate = current.clone();
        collapse(&mut candidate, id);
        let acc = accuracy(&candidate, dataset, &holdout);
        if acc >= best {
            best = acc;
            current = candidate;
        }
    }
    Ok(compact(&current))
}
