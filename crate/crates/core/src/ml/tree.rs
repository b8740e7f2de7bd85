//! Binary regression trees grown on presorted feature columns.
//!
//! A split sends `x[feature] <= threshold` left. The threshold is always the
//! largest left-hand training value, so a tree only depends on the ordering of
//! each feature and is unchanged by strictly increasing feature transforms.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Nodes in creation order; the root is at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }
}

/// The samples reaching one node, as one index list per feature sorted by
/// that feature's value (ties by index). Indices may repeat (bootstrap).
#[derive(Debug, Clone)]
pub(crate) struct NodeSamples {
    sorted: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

pub(crate) struct Grower<'a> {
    pub x: &'a [Vec<f64>],
    pub y: &'a [f64],
    pub min_leaf: usize,
    /// Added to each node's count in the score `S^2 / (n + l2)`.
    pub l2: f64,
}

impl NodeSamples {
    pub fn root(x: &[Vec<f64>], indices: &[u32]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let sorted = (0..d)
            .map(|f| {
                let mut idx = indices.to_vec();
                idx.sort_by(|&a, &b| x[a as usize][f].total_cmp(&x[b as usize][f]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self { sorted }
    }

    pub fn len(&self) -> usize {
        self.sorted.first().map_or(0, Vec::len)
    }

    pub fn indices(&self) -> &[u32] {
        self.sorted.first().map_or(&[], Vec::as_slice)
    }
}

impl Grower<'_> {
    pub fn sum(&self, node: &NodeSamples) -> f64 {
        node.indices().iter().map(|&i| self.y[i as usize]).sum()
    }

    fn score(&self, s: f64, n: usize) -> f64 {
        s * s / (n as f64 + self.l2)
    }

    fn is_constant(&self, node: &NodeSamples) -> bool {
        let idx = node.indices();
        idx.first()
            .is_none_or(|&first| idx.iter().all(|&i| self.y[i as usize] == self.y[first as usize]))
    }

    /// Best split among `features`, or `None` when no admissible split has a
    /// positive gain. Earlier features and smaller left sides win ties.
    pub fn best_split(&self, node: &NodeSamples, features: &[usize]) -> Option<SplitChoice> {
        let n = node.len();
        if n < 2 * self.min_leaf || self.is_constant(node) {
            return None;
        }
        let total = self.sum(node);
        let parent = self.score(total, n);
        let mut best: Option<SplitChoice> = None;
        for &f in features {
            let order = &node.sorted[f];
            let mut left = 0.0;
            for k in 1..n {
                let prev = order[k - 1] as usize;
                left += self.y[prev];
                if k < self.min_leaf || n - k < self.min_leaf {
                    continue;
                }
                let (a, b) = (self.x[prev][f], self.x[order[k] as usize][f]);
                if a >= b {
                    continue;
                }
                let gain = self.score(left, k) + self.score(total - left, n - k) - parent;
                if gain > 0.0 && best.is_none_or(|s| gain > s.gain) {
                    best = Some(SplitChoice {
                        feature: f,
                        threshold: a,
                        gain,
                    });
                }
            }
        }
        best
    }

    pub fn partition(&self, node: NodeSamples, split: &SplitChoice) -> (NodeSamples, NodeSamples) {
        let goes_left = |i: u32| self.x[i as usize][split.feature] <= split.threshold;
        let mut left = Vec::with_capacity(node.sorted.len());
        let mut right = Vec::with_capacity(node.sorted.len());
        for list in node.sorted {
            let (l, r): (Vec<u32>, Vec<u32>) = list.into_iter().partition(|&i| goes_left(i));
            left.push(l);
            right.push(r);
        }
        (NodeSamples { sorted: left }, NodeSamples { sorted: right })
    }
}
