use serde::{Deserialize, Serialize};

use super::nn::{batch_loss_and_grad, train_sgd, training_rng, uniform_fill, SgdSettings};
use super::{check_window, window_of, normalized_features, FeatureLayout, MlError};
use crate::preprocess::{NormalizationParams, SupervisedDataset, WindowSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlnnConfig {
    pub hidden_sizes: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for MlnnConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![64, 64],
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Fully connected tanh network with a linear output, trained on z-scored
/// inputs and target.
///
/// Parameters are one flat vector: for each layer, the weight matrix
/// (row-major, `out x in`) followed by its bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlnn {
    pub layout: FeatureLayout,
    pub window_len: usize,
    /// Input width, hidden widths, then 1.
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
    pub normalization: NormalizationParams,
}

fn n_params(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

fn forward(sizes: &[usize], params: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = vec![x.to_vec()];
    let mut off = 0;
    let last = sizes.len() - 2;
    for (l, w) in sizes.windows(2).enumerate() {
        let (n_in, n_out) = (w[0], w[1]);
        let (weights, bias) = params[off..off + n_out * n_in + n_out].split_at(n_out * n_in);
        let a = acts.last().expect("input layer");
        let z: Vec<f64> = (0..n_out)
            .map(|o| bias[o] + weights[o * n_in..(o + 1) * n_in].iter().zip(a).map(|(w, x)| w * x).sum::<f64>())
            .collect();
        acts.push(if l == last { z } else { z.into_iter().map(f64::tanh).collect() });
        off += n_out * n_in + n_out;
    }
    acts
}

/// Adds the gradient of `(f(x) - y)^2` into `grad` and returns the error.
fn sample_grad(sizes: &[usize], params: &[f64], x: &[f64], y: f64, grad: &mut [f64]) -> f64 {
    let acts = forward(sizes, params, x);
    let err = acts.last().expect("output")[0] - y;
    let mut delta = vec![2.0 * err];
    let mut off = params.len();
    for l in (0..sizes.len() - 1).rev() {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        off -= n_out * n_in + n_out;
        let a = &acts[l];
        for o in 0..n_out {
            let row = off + o * n_in;
            for i in 0..n_in {
                grad[row + i] += delta[o] * a[i];
            }
            grad[off + n_out * n_in + o] += delta[o];
        }
        if l > 0 {
            delta = (0..n_in)
                .map(|i| {
                    let back: f64 = (0..n_out).map(|o| params[off + o * n_in + i] * delta[o]).sum();
                    back * (1.0 - a[i] * a[i])
                })
                .collect();
        }
    }
    err * err
}

struct Prepared {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Mlnn {
    fn prepare(&self, samples: &[WindowSample]) -> Result<Prepared, MlError> {
        check_window(self.window_len, samples)?;
        Ok(Prepared {
            x: samples
                .iter()
                .map(|s| normalized_features(s, self.layout, &self.normalization))
                .collect(),
            y: samples.iter().map(|s| self.normalization.normalize_target(s.target)).collect(),
        })
    }

    /// Output in normalized target units.
    pub fn forward_normalized(&self, x: &[f64]) -> f64 {
        forward(&self.sizes, &self.params, x).last().expect("output")[0]
    }

    pub fn predict(&self, samples: &[WindowSample]) -> Result<Vec<f64>, MlError> {
        check_window(self.window_len, samples)?;
        Ok(samples
            .iter()
            .map(|s| {
                let x = normalized_features(s, self.layout, &self.normalization);
                self.normalization.denormalize_target(self.forward_normalized(&x))
            })
            .collect())
    }

    /// Mean squared error in normalized units and its gradient with respect
    /// to `params`.
    pub fn loss_and_grad(&self, samples: &[WindowSample]) -> Result<(f64, Vec<f64>), MlError> {
        let data = self.prepare(samples)?;
        let batch: Vec<usize> = (0..data.y.len()).collect();
        Ok(batch_loss_and_grad(&self.params, &batch, &|p: &[f64], i: usize, g: &mut [f64]| {
            sample_grad(&self.sizes, p, &data.x[i], data.y[i], g)
        }))
    }

    /// Loss at arbitrary parameters, for finite-difference checks.
    pub fn loss_at(&self, params: &[f64], samples: &[WindowSample]) -> Result<f64, MlError> {
        let data = self.prepare(samples)?;
        let total: f64 = data
            .x
            .iter()
            .zip(&data.y)
            .map(|(x, y)| (forward(&self.sizes, params, x).last().expect("output")[0] - y).powi(2))
            .sum();
        Ok(total / data.y.len().max(1) as f64)
    }
}

pub fn fit_mlnn(dataset: &SupervisedDataset, layout: FeatureLayout, config: &MlnnConfig) -> Result<Mlnn, MlError> {
    let normalization = dataset.normalization.ok_or(MlError::NotNormalized("MLNN"))?;
    let window_len = window_of(&dataset.samples)?;
    if config.hidden_sizes.contains(&0) {
        return Err(MlError::InvalidConfig("hidden sizes must be positive".into()));
    }
    let settings = SgdSettings {
        epochs: config.epochs,
        batch_size: config.batch_size,
        learning_rate: config.learning_rate,
    };
    settings.validate()?;
    let mut sizes = vec![layout.n_features(window_len)];
    sizes.extend(&config.hidden_sizes);
    sizes.push(1);

    let mut rng = training_rng(config.seed);
    let mut params = vec![0.0; n_params(&sizes)];
    let mut off = 0;
    for w in sizes.windows(2) {
        uniform_fill(&mut rng, &mut params[off..off + w[0] * w[1]], w[0]);
        off += w[0] * w[1] + w[1];
    }
    let mut model = Mlnn {
        layout,
        window_len,
        sizes,
        params,
        normalization,
    };
    let data = model.prepare(&dataset.samples)?;
    let sizes = model.sizes.clone();
    train_sgd(&mut model.params, data.y.len(), &settings, &mut rng, |p, i, g| {
        sample_grad(&sizes, p, &data.x[i], data.y[i], g)
    });
    Ok(model)
}
