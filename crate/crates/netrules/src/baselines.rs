//! Comparison models: a multiway categorical decision tree trained on the
//! ground-truth labels, and a surrogate tree trained on network predictions.

use crate::evaluation::Classifier;
use crate::model::Network;
use crate::schema::{Dataset, FeatureSchema, Instance};

/// A categorical decision tree node. Splits branch once per feature value;
/// no feature is reused along a path.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        children: Vec<TreeNode>,
    },
    Leaf {
        class: bool,
        /// (negative, positive) training rows that reached this leaf.
        counts: (usize, usize),
    },
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    /// A node with fewer than `2 * min_leaf` rows is not split further.
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 8,
            min_leaf: 5,
        }
    }
}

fn gini(neg: usize, pos: usize) -> f64 {
    let n = (neg + pos) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p0 = neg as f64 / n;
    let p1 = pos as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

fn class_counts(rows: &[(Instance, bool)], indices: &[usize]) -> (usize, usize) {
    let mut counts = (0, 0);
    for &i in indices {
        if rows[i].1 {
            counts.1 += 1;
        } else {
            counts.0 += 1;
        }
    }
    counts
}

fn majority(counts: (usize, usize)) -> bool {
    // Ties resolve to the negative class.
    counts.1 > counts.0
}

fn build(
    schema: &FeatureSchema,
    rows: &[(Instance, bool)],
    indices: &[usize],
    used: &mut Vec<bool>,
    depth: usize,
    params: &TreeParams,
) -> TreeNode {
    let counts = class_counts(rows, indices);
    let leaf = TreeNode::Leaf {
        class: majority(counts),
        counts,
    };
    if depth >= params.max_depth
        || indices.len() < params.min_leaf * 2
        || counts.0 == 0
        || counts.1 == 0
        || used.iter().all(|&u| u)
    {
        return leaf;
    }

    // Greedy multiway split: largest Gini impurity reduction, ties resolved
    // by the lowest feature index.
    let parent_gini = gini(counts.0, counts.1);
    let n = indices.len() as f64;
    let mut best: Option<(usize, f64)> = None;
    for f in 0..schema.feature_count() {
        if used[f] {
            continue;
        }
        let mut child_counts = vec![(0usize, 0usize); schema.value_count(f)];
        for &i in indices {
            let v = rows[i].0.value(f);
            if rows[i].1 {
                child_counts[v].1 += 1;
            } else {
                child_counts[v].0 += 1;
            }
        }
        let weighted: f64 = child_counts
            .iter()
            .map(|&(neg, pos)| ((neg + pos) as f64 / n) * gini(neg, pos))
            .sum();
        let gain = parent_gini - weighted;
        if gain > best.map(|(_, g)| g).unwrap_or(1e-12) {
            best = Some((f, gain));
        }
    }
    let Some((feature, _)) = best else {
        return leaf;
    };

    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); schema.value_count(feature)];
    for &i in indices {
        buckets[rows[i].0.value(feature)].push(i);
    }
    used[feature] = true;
    let children = buckets
        .iter()
        .map(|bucket| {
            if bucket.is_empty() {
                // No training rows take this branch: inherit the parent
                // majority so prediction stays total.
                TreeNode::Leaf {
                    class: majority(counts),
                    counts: (0, 0),
                }
            } else {
                build(schema, rows, bucket, used, depth + 1, params)
            }
        })
        .collect();
    used[feature] = false;
    TreeNode::Split { feature, children }
}

/// Greedy Gini decision tree with multiway categorical splits.
pub fn train_tree(schema: &FeatureSchema, rows: &[(Instance, bool)], params: &TreeParams) -> TreeNode {
    assert!(!rows.is_empty(), "training set is empty");
    let indices: Vec<usize> = (0..rows.len()).collect();
    let mut used = vec![false; schema.feature_count()];
    build(schema, rows, &indices, &mut used, 0, params)
}

/// Follows splits by the instance's values down to a leaf class.
pub fn tree_predict(tree: &TreeNode, instance: &Instance) -> bool {
    let mut node = tree;
    loop {
        match node {
            TreeNode::Leaf { class, .. } => return *class,
            TreeNode::Split { feature, children } => {
                node = &children[instance.value(*feature)];
            }
        }
    }
}

impl Classifier for TreeNode {
    fn classify(&self, _schema: &FeatureSchema, instance: &Instance) -> bool {
        tree_predict(self, instance)
    }
}

/// Training rows relabeled with the network's predictions.
pub fn relabel_with_network(net: &Network, train: &Dataset) -> Vec<(Instance, bool)> {
    let schema = train.schema();
    train
        .rows()
        .iter()
        .map(|(inst, _)| (inst.clone(), net.predict_instance(inst, schema)))
        .collect()
}

/// Surrogate tree fit to the network's predicted labels on the training
/// rows (the network is treated as a black box).
pub fn surrogate_tree(net: &Network, train: &Dataset, params: &TreeParams) -> TreeNode {
    let relabeled = relabel_with_network(net, train);
    train_tree(train.schema(), &relabeled, params)
}

impl TreeNode {
    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { children, .. } => children.iter().map(|c| c.leaf_count()).sum(),
        }
    }

    pub fn positive_leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { class, .. } => usize::from(*class),
            TreeNode::Split { children, .. } => {
                children.iter().map(|c| c.positive_leaf_count()).sum()
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { children, .. } => {
                1 + children.iter().map(|c| c.depth()).max().unwrap_or(0)
            }
        }
    }

    /// Indented text rendering for inspection.
    pub fn render(&self, schema: &FeatureSchema) -> String {
        let mut out = String::new();
        self.render_into(schema, 0, &mut out);
        out
    }

    fn render_into(&self, schema: &FeatureSchema, indent: usize, out: &mut String) {
        match self {
            TreeNode::Leaf { class, counts } => {
                out.push_str(&format!(
                    "{}leaf {} (neg={}, pos={})\n",
                    "  ".repeat(indent),
                    u8::from(*class),
                    counts.0,
                    counts.1
                ));
            }
            TreeNode::Split { feature, children } => {
                out.push_str(&format!(
                    "{}split {}\n",
                    "  ".repeat(indent),
                    schema.feature(*feature).name
                ));
                for (v, child) in children.iter().enumerate() {
                    out.push_str(&format!(
                        "{}= {}:\n",
                        "  ".repeat(indent + 1),
                        schema.feature(*feature).values[v]
                    ));
                    child.render_into(schema, indent + 2, out);
                }
            }
        }
    }
}
