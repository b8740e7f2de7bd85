use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{Grower, Node, NodeSamples, SplitChoice, Tree};
use super::{feature_matrix, window_of, EnsembleMode, FeatureLayout, MlError, TreeEnsemble};
use crate::preprocess::SupervisedDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtConfig {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub min_leaf: usize,
    pub l2: f64,
    /// Share of features each tree may split on.
    pub feature_fraction: f64,
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            n_rounds: 300,
            learning_rate: 0.05,
            max_leaves: 31,
            min_leaf: 20,
            l2: 1.0,
            feature_fraction: 1.0,
            seed: 0,
        }
    }
}

impl GbtConfig {
    fn validate(&self) -> Result<(), MlError> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(MlError::InvalidConfig("learning_rate must lie in (0, 1]".into()));
        }
        if self.max_leaves == 0 || self.min_leaf == 0 {
            return Err(MlError::InvalidConfig("max_leaves and min_leaf must be positive".into()));
        }
        if !(self.l2 >= 0.0) {
            return Err(MlError::InvalidConfig("l2 must be non-negative".into()));
        }
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return Err(MlError::InvalidConfig("feature_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

pub fn fit_gbt(dataset: &SupervisedDataset, layout: FeatureLayout, config: &GbtConfig) -> Result<TreeEnsemble, MlError> {
    fit_gbt_traced(dataset, layout, config).map(|(m, _)| m)
}

/// Also returns the mean squared training error after the base score and
/// after every round (`n_rounds + 1` values).
pub fn fit_gbt_traced(
    dataset: &SupervisedDataset,
    layout: FeatureLayout,
    config: &GbtConfig,
) -> Result<(TreeEnsemble, Vec<f64>), MlError> {
    config.validate()?;
    let window_len = window_of(&dataset.samples)?;
    let x = feature_matrix(&dataset.samples, layout);
    let y = dataset.targets();
    let n = y.len();
    let d = layout.n_features(window_len);
    let n_sub = ((config.feature_fraction * d as f64).round() as usize).clamp(1, d);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let base_score = y.iter().sum::<f64>() / n as f64;
    let mut fitted = vec![base_score; n];
    let mse = |fitted: &[f64]| fitted.iter().zip(&y).map(|(f, t)| (t - f).powi(2)).sum::<f64>() / n as f64;
    let mut losses = vec![mse(&fitted)];
    let root = NodeSamples::root(&x, &(0..n as u32).collect::<Vec<_>>());

    let mut trees = Vec::with_capacity(config.n_rounds);
    for _ in 0..config.n_rounds {
        let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(t, f)| t - f).collect();
        let mut features: Vec<usize> = if n_sub == d {
            (0..d).collect()
        } else {
            sample(&mut rng, d, n_sub).into_vec()
        };
        features.sort_unstable();
        let grower = Grower {
            x: &x,
            y: &residuals,
            min_leaf: config.min_leaf,
            l2: config.l2,
        };
        let tree = grow_leaf_wise(&grower, root.clone(), &features, config);
        for (f, xi) in fitted.iter_mut().zip(&x) {
            *f += tree.predict(xi);
        }
        losses.push(mse(&fitted));
        trees.push(tree);
    }
    let model = TreeEnsemble {
        mode: EnsembleMode::AdditiveShrunk,
        layout,
        window_len,
        base_score,
        learning_rate: config.learning_rate,
        trees,
    };
    Ok((model, losses))
}

/// Repeatedly splits the open leaf with the largest gain until `max_leaves`
/// is reached or no leaf can be improved. Leaf value: `lr * S / (n + l2)`.
fn grow_leaf_wise(grower: &Grower, root: NodeSamples, features: &[usize], config: &GbtConfig) -> Tree {
    struct Open {
        slot: usize,
        samples: NodeSamples,
        split: Option<SplitChoice>,
    }
    let leaf_value = |s: &NodeSamples| config.learning_rate * grower.sum(s) / (s.len() as f64 + config.l2);
    let open = |slot, samples: NodeSamples| {
        let split = grower.best_split(&samples, features);
        Open { slot, samples, split }
    };

    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut leaves = vec![open(0, root)];
    while leaves.len() < config.max_leaves {
        let mut pick: Option<(usize, f64)> = None;
        for (i, leaf) in leaves.iter().enumerate() {
            if let Some(s) = leaf.split {
                if pick.is_none_or(|(_, g)| s.gain > g) {
                    pick = Some((i, s.gain));
                }
            }
        }
        let Some((i, _)) = pick else { break };
        let Open { slot, samples, split } = leaves.remove(i);
        let split = split.expect("picked leaf has a split");
        let (left, right) = grower.partition(samples, &split);
        let (li, ri) = (nodes.len(), nodes.len() + 1);
        nodes.push(Node::Leaf { value: 0.0 });
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[slot] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: li,
            right: ri,
        };
        leaves.insert(i, open(ri, right));
        leaves.insert(i, open(li, left));
    }
    for leaf in &leaves {
        nodes[leaf.slot] = Node::Leaf {
            value: leaf_value(&leaf.samples),
        };
    }
    Tree { nodes }
}
