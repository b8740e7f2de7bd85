//! Pooled regressors trained on window samples from all entities.

mod forest;
mod gbt;
mod lstm;
mod mlnn;
mod nn;
mod tree;
mod tune;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::{NormalizationParams, SupervisedDataset, WindowSample};

pub use forest::{fit_random_forest, ForestConfig};
pub use gbt::{fit_gbt, fit_gbt_traced, GbtConfig};
pub use lstm::{fit_lstm, Lstm, LstmConfig};
pub use mlnn::{fit_mlnn, Mlnn, MlnnConfig};
pub use nn::max_relative_error;
pub use tree::{Node, Tree};
pub use tune::{tune, TuneOutcome};

/// Version written into every saved model file.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MlError {
    #[error("training set is empty")]
    Empty,
    #[error("{0} requires a normalized dataset")]
    NotNormalized(&'static str),
    #[error("feature layout mismatch: model expects {expected} features, got {got}")]
    LayoutMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported model file version {0}")]
    Version(u32),
    #[error("model file: {0}")]
    Serialization(#[from] serde_json::Error),
}

/// Which channels feed the feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureLayout {
    /// Social window followed by broadcast window.
    WithBroadcast,
    /// Social window only.
    SocialOnly,
}

impl FeatureLayout {
    pub fn n_channels(self) -> usize {
        match self {
            Self::WithBroadcast => 2,
            Self::SocialOnly => 1,
        }
    }

    pub fn n_features(self, window_len: usize) -> usize {
        self.n_channels() * window_len
    }
}

pub fn feature_vector(sample: &WindowSample, layout: FeatureLayout) -> Vec<f64> {
    let mut v = sample.input_social.clone();
    if layout == FeatureLayout::WithBroadcast {
        v.extend_from_slice(&sample.input_broadcast);
    }
    v
}

pub fn feature_matrix(samples: &[WindowSample], layout: FeatureLayout) -> Vec<Vec<f64>> {
    samples.iter().map(|s| feature_vector(s, layout)).collect()
}

/// Same layout as [`feature_vector`], z-scored per channel.
pub(crate) fn normalized_features(sample: &WindowSample, layout: FeatureLayout, norm: &NormalizationParams) -> Vec<f64> {
    let mut v: Vec<f64> = sample.input_social.iter().map(|&x| norm.normalize(0, x)).collect();
    if layout == FeatureLayout::WithBroadcast {
        v.extend(sample.input_broadcast.iter().map(|&x| norm.normalize(1, x)));
    }
    v
}

/// Window length shared by all samples (taken from the first one).
pub(crate) fn window_of(samples: &[WindowSample]) -> Result<usize, MlError> {
    let len = samples.first().ok_or(MlError::Empty)?.input_social.len();
    check_window(len, samples)?;
    Ok(len)
}

pub(crate) fn check_window(expected: usize, samples: &[WindowSample]) -> Result<(), MlError> {
    match samples.iter().find(|s| s.input_social.len() != expected || s.input_broadcast.len() != expected) {
        Some(s) => Err(MlError::LayoutMismatch {
            expected,
            got: s.input_social.len(),
        }),
        None => Ok(()),
    }
}

/// A fitted model that maps window samples to predicted target values.
pub trait Regressor: Send + Sync {
    fn name(&self) -> String;
    fn predict(&self, samples: &[WindowSample]) -> Result<Vec<f64>, MlError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    /// Mean of tree outputs.
    Averaged,
    /// Base score plus the sum of (already shrunk) tree outputs.
    AdditiveShrunk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub mode: EnsembleMode,
    pub layout: FeatureLayout,
    pub window_len: usize,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl TreeEnsemble {
    pub fn n_features(&self) -> usize {
        self.layout.n_features(self.window_len)
    }

    pub fn predict_features(&self, x: &[f64]) -> Result<f64, MlError> {
        if x.len() != self.n_features() {
            return Err(MlError::LayoutMismatch {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        Ok(match self.mode {
            EnsembleMode::Averaged => self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64,
            EnsembleMode::AdditiveShrunk => self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>(),
        })
    }

    pub fn predict(&self, samples: &[WindowSample]) -> Result<Vec<f64>, MlError> {
        check_window(self.window_len, samples)?;
        samples
            .iter()
            .map(|s| self.predict_features(&feature_vector(s, self.layout)))
            .collect()
    }
}

/// Model family plus its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    RandomForest(ForestConfig),
    Gbt(GbtConfig),
    Mlnn(MlnnConfig),
    Lstm(LstmConfig),
}

impl ModelSpec {
    pub fn family(&self) -> &'static str {
        match self {
            Self::RandomForest(_) => "RF",
            Self::Gbt(_) => "GBT",
            Self::Mlnn(_) => "MLNN",
            Self::Lstm(_) => "LSTM",
        }
    }

    pub fn fit(&self, dataset: &SupervisedDataset, layout: FeatureLayout) -> Result<TrainedModel, MlError> {
        Ok(match self {
            Self::RandomForest(c) => TrainedModel::Forest(fit_random_forest(dataset, layout, c)?),
            Self::Gbt(c) => TrainedModel::Gbt(fit_gbt(dataset, layout, c)?),
            Self::Mlnn(c) => TrainedModel::Mlnn(fit_mlnn(dataset, layout, c)?),
            Self::Lstm(c) => TrainedModel::Lstm(fit_lstm(dataset, layout, c)?),
        })
    }
}

pub fn model_name(family: &str, layout: FeatureLayout) -> String {
    match layout {
        FeatureLayout::WithBroadcast => family.to_string(),
        FeatureLayout::SocialOnly => format!("{family}-TW"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "state", rename_all = "snake_case")]
pub enum TrainedModel {
    Forest(TreeEnsemble),
    Gbt(TreeEnsemble),
    Mlnn(Mlnn),
    Lstm(Lstm),
}

impl TrainedModel {
    pub fn layout(&self) -> FeatureLayout {
        match self {
            Self::Forest(m) | Self::Gbt(m) => m.layout,
            Self::Mlnn(m) => m.layout,
            Self::Lstm(m) => m.layout,
        }
    }

    fn family(&self) -> &'static str {
        match self {
            Self::Forest(_) => "RF",
            Self::Gbt(_) => "GBT",
            Self::Mlnn(_) => "MLNN",
            Self::Lstm(_) => "LSTM",
        }
    }
}

impl Regressor for TrainedModel {
    fn name(&self) -> String {
        model_name(self.family(), self.layout())
    }

    fn predict(&self, samples: &[WindowSample]) -> Result<Vec<f64>, MlError> {
        match self {
            Self::Forest(m) | Self::Gbt(m) => m.predict(samples),
            Self::Mlnn(m) => m.predict(samples),
            Self::Lstm(m) => m.predict(samples),
        }
    }
}

/// On-disk form of a trained model: JSON with shortest round-trip floats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub format_version: u32,
    pub name: String,
    pub spec: ModelSpec,
    pub model: TrainedModel,
}

impl SavedModel {
    pub fn new(spec: ModelSpec, model: TrainedModel) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            name: model.name(),
            spec,
            model,
        }
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<(), MlError> {
        serde_json::to_writer(writer, self)?;
        Ok(())
    }

    pub fn read<R: Read>(reader: R) -> Result<Self, MlError> {
        let saved: Self = serde_json::from_reader(reader)?;
        if saved.format_version != MODEL_FORMAT_VERSION {
            return Err(MlError::Version(saved.format_version));
        }
        Ok(saved)
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::preprocess::{fit_normalization, SupervisedDataset, WindowSample};

    /// Random windows in [0, 1) with target `f(social, broadcast)`.
    pub fn dataset(
        n: usize,
        window: usize,
        seed: u64,
        f: impl Fn(&[f64], &[f64]) -> f64,
    ) -> SupervisedDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<WindowSample> = (0..n)
            .map(|i| {
                let social: Vec<f64> = (0..window).map(|_| rng.random::<f64>()).collect();
                let broadcast: Vec<f64> = (0..window).map(|_| rng.random::<f64>()).collect();
                WindowSample {
                    entity_id: format!("s{i}"),
                    target: f(&social, &broadcast),
                    input_social: social,
                    input_broadcast: broadcast,
                    window_end_week: window,
                }
            })
            .collect();
        let mut ds = SupervisedDataset::new(samples, 4);
        ds.normalization = fit_normalization(&ds.samples).ok();
        ds
    }
}
