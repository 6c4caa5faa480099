//! CART classification tree with weighted Gini impurity.
//!
//! Thresholds sit at midpoints between consecutive distinct feature values.
//! Among equally good splits the lowest feature index wins, then the lowest
//! threshold, so trees are reproducible bit for bit.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::TrainRows;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features examined per split; all of them when `None`.
    pub features_per_split: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf {
        dist: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl Tree {
    /// Grows a tree over `sample` (row indices into `rows`) using `weights`
    /// (indexed like `rows`). `rng` drives per-split feature sampling.
    pub(crate) fn fit(
        rows: &TrainRows<'_>,
        sample: &[usize],
        weights: &[f64],
        num_classes: usize,
        params: &TreeParams,
        mut rng: Option<&mut Rng>,
    ) -> Tree {
        let dim = rows.x.first().map_or(0, |x| x.len());
        let mut nodes = vec![Node::Leaf { dist: Vec::new() }];
        let mut stack = vec![(0usize, sample.to_vec(), 0usize)];
        while let Some((slot, members, depth)) = stack.pop() {
            let class_w = class_weights(rows, weights, &members, num_classes);
            let total: f64 = class_w.iter().sum();
            let pure = class_w.iter().filter(|&&w| w > 0.0).count() <= 1;
            let depth_done = params.max_depth.is_some_and(|m| depth >= m);
            let split = if pure || depth_done || members.len() < 2 * params.min_leaf {
                None
            } else {
                let features: Vec<usize> = match (params.features_per_split, rng.as_deref_mut()) {
                    (Some(m), Some(r)) if m < dim => {
                        let mut f = index::sample(r, dim, m).into_vec();
                        f.sort_unstable();
                        f
                    }
                    _ => (0..dim).collect(),
                };
                let parent = total - class_w.iter().map(|w| w * w).sum::<f64>() / total;
                best_split(rows, weights, &members, &features, num_classes, params.min_leaf)
                    .filter(|c| parent - c.impurity > 1e-12 * total.max(1.0))
            };
            match split {
                None => {
                    nodes[slot] = Node::Leaf {
                        dist: leaf_distribution(rows, &members, &class_w, num_classes),
                    };
                }
                Some(c) => {
                    let (l, r): (Vec<usize>, Vec<usize>) = members
                        .iter()
                        .partition(|&&i| rows.x[i][c.feature] <= c.threshold);
                    let left = nodes.len();
                    nodes.push(Node::Leaf { dist: Vec::new() });
                    let right = nodes.len();
                    nodes.push(Node::Leaf { dist: Vec::new() });
                    nodes[slot] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right,
                    };
                    stack.push((right, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
        Tree { nodes }
    }

    /// Class distribution of the leaf `x` falls into.
    pub fn leaf_distribution(&self, x: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { dist } => return dist,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

fn class_weights(rows: &TrainRows<'_>, weights: &[f64], members: &[usize], c: usize) -> Vec<f64> {
    let mut cw = vec![0.0; c];
    for &i in members {
        cw[rows.y[i]] += weights[i];
    }
    cw
}

fn leaf_distribution(rows: &TrainRows<'_>, members: &[usize], class_w: &[f64], c: usize) -> Vec<f64> {
    let total: f64 = class_w.iter().sum();
    if total > 0.0 {
        return class_w.iter().map(|w| w / total).collect();
    }
    // zero-weight leaf: fall back to member counts
    let mut counts = vec![0.0; c];
    for &i in members {
        counts[rows.y[i]] += 1.0;
    }
    let n: f64 = counts.iter().sum();
    counts.iter().map(|k| k / n).collect()
}

/// Weighted Gini impurity of a split, scaled by node weight:
/// `Σ_side (W_side − Σ_c w_c² / W_side)`.
fn side_impurity(cw: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        0.0
    } else {
        total - cw.iter().map(|w| w * w).sum::<f64>() / total
    }
}

fn best_split(
    rows: &TrainRows<'_>,
    weights: &[f64],
    members: &[usize],
    features: &[usize],
    c: usize,
    min_leaf: usize,
) -> Option<Candidate> {
    let n = members.len();
    let total_w = class_weights(rows, weights, members, c);
    let total: f64 = total_w.iter().sum();
    let mut best: Option<Candidate> = None;
    let mut order = members.to_vec();
    let mut left = vec![0.0; c];
    let mut right = vec![0.0; c];
    for &f in features {
        order.sort_by(|&a, &b| rows.x[a][f].total_cmp(&rows.x[b][f]).then(a.cmp(&b)));
        left.iter_mut().for_each(|v| *v = 0.0);
        let mut left_total = 0.0;
        for pos in 0..n - 1 {
            let i = order[pos];
            left[rows.y[i]] += weights[i];
            left_total += weights[i];
            let here = rows.x[i][f];
            let next = rows.x[order[pos + 1]][f];
            if here == next || pos + 1 < min_leaf || n - pos - 1 < min_leaf {
                continue;
            }
            let right_total = total - left_total;
            if left_total <= 0.0 || right_total <= 1e-12 * total {
                continue;
            }
            for k in 0..c {
                right[k] = total_w[k] - left[k];
            }
            let impurity = side_impurity(&left, left_total) + side_impurity(&right, right_total);
            if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                let mut threshold = 0.5 * (here + next);
                if threshold >= next {
                    threshold = here;
                }
                best = Some(Candidate {
                    feature: f,
                    threshold,
                    impurity,
                });
            }
        }
    }
    best
}
