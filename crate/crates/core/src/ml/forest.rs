use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Grower, Node, NodeSamples, Tree};
use super::{feature_matrix, window_of, EnsembleMode, FeatureLayout, MlError, TreeEnsemble};
use crate::preprocess::SupervisedDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Share of features tried at each split, at least one.
    pub max_features_fraction: f64,
    pub min_leaf: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_features_fraction: 1.0 / 3.0,
            min_leaf: 1,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    fn validate(&self) -> Result<(), MlError> {
        if self.n_trees == 0 || self.min_leaf == 0 {
            return Err(MlError::InvalidConfig("n_trees and min_leaf must be positive".into()));
        }
        if !(self.max_features_fraction > 0.0 && self.max_features_fraction <= 1.0) {
            return Err(MlError::InvalidConfig("max_features_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Tree `i` uses the seed `seed + i`, so the forest is the same however the
/// trees are scheduled.
pub fn fit_random_forest(
    dataset: &SupervisedDataset,
    layout: FeatureLayout,
    config: &ForestConfig,
) -> Result<TreeEnsemble, MlError> {
    config.validate()?;
    let window_len = window_of(&dataset.samples)?;
    let x = feature_matrix(&dataset.samples, layout);
    let y = dataset.targets();
    let d = layout.n_features(window_len);
    let mtry = ((config.max_features_fraction * d as f64).round() as usize).clamp(1, d);

    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(i as u64));
            grow_tree(&x, &y, d, mtry, config, &mut rng)
        })
        .collect();
    Ok(TreeEnsemble {
        mode: EnsembleMode::Averaged,
        layout,
        window_len,
        base_score: 0.0,
        learning_rate: 1.0,
        trees,
    })
}

fn grow_tree(x: &[Vec<f64>], y: &[f64], d: usize, mtry: usize, config: &ForestConfig, rng: &mut ChaCha8Rng) -> Tree {
    let n = y.len();
    let indices: Vec<u32> = if config.bootstrap {
        (0..n).map(|_| rng.random_range(0..n) as u32).collect()
    } else {
        (0..n as u32).collect()
    };
    let grower = Grower {
        x,
        y,
        min_leaf: config.min_leaf,
        l2: 0.0,
    };
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut stack = vec![(0usize, NodeSamples::root(x, &indices))];
    while let Some((slot, samples)) = stack.pop() {
        let mut features: Vec<usize> = sample(rng, d, mtry).into_vec();
        features.sort_unstable();
        let mut split = grower.best_split(&samples, &features);
        if split.is_none() && mtry < d {
            // Fall back to the features not drawn.
            let rest: Vec<usize> = (0..d).filter(|f| features.binary_search(f).is_err()).collect();
            split = grower.best_split(&samples, &rest);
        }
        match split {
            Some(split) => {
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
                stack.push((ri, right));
                stack.push((li, left));
            }
            None => {
                nodes[slot] = Node::Leaf {
                    value: grower.sum(&samples) / samples.len() as f64,
                };
            }
        }
    }
    Tree { nodes }
}
