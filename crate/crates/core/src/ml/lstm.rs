use serde::{Deserialize, Serialize};

use super::nn::{batch_loss_and_grad, train_sgd, training_rng, uniform_fill, SgdSettings};
use super::{check_window, window_of, FeatureLayout, MlError};
use crate::preprocess::{NormalizationParams, SupervisedDataset, WindowSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmConfig {
    pub hidden_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            hidden_size: 32,
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Single-layer LSTM read over the window one week at a time, with a linear
/// head on the last hidden state.
///
/// Flat parameter layout, gates ordered input, forget, cell, output:
/// input weights `4H x k`, recurrent weights `4H x H`, gate biases `4H`,
/// head weights `H`, head bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    pub layout: FeatureLayout,
    pub window_len: usize,
    pub hidden_size: usize,
    pub params: Vec<f64>,
    pub normalization: NormalizationParams,
}

#[derive(Clone, Copy)]
struct Shape {
    k: usize,
    h: usize,
}

impl Shape {
    fn w(self) -> usize {
        0
    }
    fn u(self) -> usize {
        4 * self.h * self.k
    }
    fn b(self) -> usize {
        self.u() + 4 * self.h * self.h
    }
    fn head(self) -> usize {
        self.b() + 4 * self.h
    }
    fn len(self) -> usize {
        self.head() + self.h + 1
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

struct Step {
    gates: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
}

fn run(shape: Shape, p: &[f64], seq: &[Vec<f64>]) -> Vec<Step> {
    let Shape { k, h } = shape;
    let mut steps: Vec<Step> = Vec::with_capacity(seq.len());
    let zeros = vec![0.0; h];
    for x in seq {
        let (h_prev, c_prev) = steps.last().map_or((&zeros, &zeros), |s| (&s.h, &s.c));
        let mut gates = vec![0.0; 4 * h];
        for (r, gate) in gates.iter_mut().enumerate() {
            let mut z = p[shape.b() + r];
            let wr = &p[shape.w() + r * k..shape.w() + (r + 1) * k];
            z += wr.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            let ur = &p[shape.u() + r * h..shape.u() + (r + 1) * h];
            z += ur.iter().zip(h_prev).map(|(a, b)| a * b).sum::<f64>();
            *gate = if (2 * h..3 * h).contains(&r) { z.tanh() } else { sigmoid(z) };
        }
        let c: Vec<f64> = (0..h).map(|j| gates[h + j] * c_prev[j] + gates[j] * gates[2 * h + j]).collect();
        let hn: Vec<f64> = (0..h).map(|j| gates[3 * h + j] * c[j].tanh()).collect();
        steps.push(Step { gates, c, h: hn });
    }
    steps
}

fn output(shape: Shape, p: &[f64], steps: &[Step]) -> f64 {
    let last = steps.last().map_or_else(|| vec![0.0; shape.h], |s| s.h.clone());
    p[shape.head() + shape.h] + (0..shape.h).map(|j| p[shape.head() + j] * last[j]).sum::<f64>()
}

/// Backpropagation through every step of the window. Adds the gradient of
/// `(f(seq) - y)^2` into `grad` and returns the squared error.
fn sample_grad(shape: Shape, p: &[f64], seq: &[Vec<f64>], y: f64, grad: &mut [f64]) -> f64 {
    let Shape { k, h } = shape;
    let steps = run(shape, p, seq);
    let err = output(shape, p, &steps) - y;
    let dy = 2.0 * err;
    let zeros = vec![0.0; h];
    let last_h = steps.last().map_or(&zeros, |s| &s.h);
    for j in 0..h {
        grad[shape.head() + j] += dy * last_h[j];
    }
    grad[shape.head() + h] += dy;

    let mut dh: Vec<f64> = (0..h).map(|j| dy * p[shape.head() + j]).collect();
    let mut dc = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    for t in (0..steps.len()).rev() {
        let s = &steps[t];
        let (h_prev, c_prev) = if t > 0 { (&steps[t - 1].h, &steps[t - 1].c) } else { (&zeros, &zeros) };
        for j in 0..h {
            let (i, f, g, o) = (s.gates[j], s.gates[h + j], s.gates[2 * h + j], s.gates[3 * h + j]);
            let tc = s.c[j].tanh();
            dc[j] += dh[j] * o * (1.0 - tc * tc);
            dz[j] = dc[j] * g * i * (1.0 - i);
            dz[h + j] = dc[j] * c_prev[j] * f * (1.0 - f);
            dz[2 * h + j] = dc[j] * i * (1.0 - g * g);
            dz[3 * h + j] = dh[j] * tc * o * (1.0 - o);
            dc[j] *= f;
        }
        for r in 0..4 * h {
            for (a, xv) in seq[t].iter().enumerate() {
                grad[shape.w() + r * k + a] += dz[r] * xv;
            }
            for a in 0..h {
                grad[shape.u() + r * h + a] += dz[r] * h_prev[a];
            }
            grad[shape.b() + r] += dz[r];
        }
        for (a, dha) in dh.iter_mut().enumerate() {
            *dha = (0..4 * h).map(|r| p[shape.u() + r * h + a] * dz[r]).sum();
        }
    }
    err * err
}

impl Lstm {
    fn shape(&self) -> Shape {
        Shape {
            k: self.layout.n_channels(),
            h: self.hidden_size,
        }
    }

    /// The window as a sequence of per-week z-scored inputs.
    pub fn sequence(&self, sample: &WindowSample) -> Vec<Vec<f64>> {
        let norm = &self.normalization;
        (0..sample.input_social.len())
            .map(|t| {
                let mut v = vec![norm.normalize(0, sample.input_social[t])];
                if self.layout == FeatureLayout::WithBroadcast {
                    v.push(norm.normalize(1, sample.input_broadcast[t]));
                }
                v
            })
            .collect()
    }

    /// Output in normalized target units.
    pub fn forward_normalized(&self, seq: &[Vec<f64>]) -> f64 {
        let steps = run(self.shape(), &self.params, seq);
        output(self.shape(), &self.params, &steps)
    }

    pub fn predict(&self, samples: &[WindowSample]) -> Result<Vec<f64>, MlError> {
        check_window(self.window_len, samples)?;
        Ok(samples
            .iter()
            .map(|s| self.normalization.denormalize_target(self.forward_normalized(&self.sequence(s))))
            .collect())
    }

    fn prepare(&self, samples: &[WindowSample]) -> Result<(Vec<Vec<Vec<f64>>>, Vec<f64>), MlError> {
        check_window(self.window_len, samples)?;
        Ok((
            samples.iter().map(|s| self.sequence(s)).collect(),
            samples.iter().map(|s| self.normalization.normalize_target(s.target)).collect(),
        ))
    }

    /// Mean squared error in normalized units and its gradient with respect
    /// to `params`.
    pub fn loss_and_grad(&self, samples: &[WindowSample]) -> Result<(f64, Vec<f64>), MlError> {
        let (xs, ys) = self.prepare(samples)?;
        let shape = self.shape();
        let batch: Vec<usize> = (0..ys.len()).collect();
        Ok(batch_loss_and_grad(&self.params, &batch, &|p: &[f64], i: usize, g: &mut [f64]| {
            sample_grad(shape, p, &xs[i], ys[i], g)
        }))
    }

    /// Loss at arbitrary parameters, for finite-difference checks.
    pub fn loss_at(&self, params: &[f64], samples: &[WindowSample]) -> Result<f64, MlError> {
        let (xs, ys) = self.prepare(samples)?;
        let shape = self.shape();
        let total: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (output(shape, params, &run(shape, params, x)) - y).powi(2))
            .sum();
        Ok(total / ys.len().max(1) as f64)
    }
}

pub fn fit_lstm(dataset: &SupervisedDataset, layout: FeatureLayout, config: &LstmConfig) -> Result<Lstm, MlError> {
    let normalization = dataset.normalization.ok_or(MlError::NotNormalized("LSTM"))?;
    let window_len = window_of(&dataset.samples)?;
    if config.hidden_size == 0 {
        return Err(MlError::InvalidConfig("hidden_size must be positive".into()));
    }
    let settings = SgdSettings {
        epochs: config.epochs,
        batch_size: config.batch_size,
        learning_rate: config.learning_rate,
    };
    settings.validate()?;
    let shape = Shape {
        k: layout.n_channels(),
        h: config.hidden_size,
    };
    let mut rng = training_rng(config.seed);
    let mut params = vec![0.0; shape.len()];
    uniform_fill(&mut rng, &mut params[..shape.b()], shape.k + shape.h);
    for j in 0..shape.h {
        params[shape.b() + shape.h + j] = 1.0;
    }
    uniform_fill(&mut rng, &mut params[shape.head()..shape.head() + shape.h], shape.h);

    let mut model = Lstm {
        layout,
        window_len,
        hidden_size: config.hidden_size,
        params,
        normalization,
    };
    let (xs, ys) = model.prepare(&dataset.samples)?;
    train_sgd(&mut model.params, ys.len(), &settings, &mut rng, |p, i, g| {
        sample_grad(shape, p, &xs[i], ys[i], g)
    });
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::fixtures::dataset;
    use crate::ml::max_relative_error;
    use crate::ml::nn::central_differences;

    #[test]
    fn bptt_matches_finite_differences() {
        let ds = dataset(3, 5, 0, |s, b| s[4] + b[0]);
        let cfg = LstmConfig {
            hidden_size: 4,
            epochs: 1,
            batch_size: 1,
            learning_rate: 0.05,
            ..Default::default()
        };
        for layout in [FeatureLayout::WithBroadcast, FeatureLayout::SocialOnly] {
            let model = fit_lstm(&ds, layout, &cfg).unwrap();
            let (_, grad) = model.loss_and_grad(&ds.samples).unwrap();
            let numeric = central_differences(&model.params, 1e-5, |p| model.loss_at(p, &ds.samples).unwrap());
            let err = max_relative_error(&grad, &numeric, 1e-8);
            assert!(err < 1e-4, "{layout:?}: {err}");
        }
    }

    #[test]
    fn zero_gates_and_input_give_head_bias() {
        let ds = dataset(4, 3, 1, |s, _| s[0]);
        let mut model = fit_lstm(&ds, FeatureLayout::WithBroadcast, &LstmConfig { hidden_size: 3, epochs: 0, ..Default::default() }).unwrap();
        model.params.iter_mut().for_each(|v| *v = 0.0);
        let n = model.params.len();
        model.params[n - 1] = 0.75;
        assert_eq!(model.forward_normalized(&vec![vec![0.0, 0.0]; 3]), 0.75);
    }

    #[test]
    fn copy_task() {
        let train = dataset(500, 6, 2, |s, _| s[5]);
        let mut test = dataset(200, 6, 3, |s, _| s[5]);
        test.normalization = train.normalization;
        let cfg = LstmConfig {
            hidden_size: 8,
            epochs: 60,
            batch_size: 16,
            learning_rate: 0.1,
            ..Default::default()
        };
        let model = fit_lstm(&train, FeatureLayout::WithBroadcast, &cfg).unwrap();
        let pred = model.predict(&test.samples).unwrap();
        let mae = pred.iter().zip(test.targets()).map(|(p, t)| (p - t).abs()).sum::<f64>() / 200.0;
        assert!(mae < 0.05, "{mae}");
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let ds = dataset(4, 3, 4, |s, _| s[0]);
        let m = fit_lstm(&ds, FeatureLayout::SocialOnly, &LstmConfig { hidden_size: 2, epochs: 0, ..Default::default() }).unwrap();
        let shape = m.shape();
        assert_eq!(&m.params[shape.b() + 2..shape.b() + 4], &[1.0, 1.0]);
        assert_eq!(m.params.len(), shape.len());
    }

    #[test]
    fn requires_normalization() {
        let mut ds = dataset(10, 3, 5, |s, _| s[0]);
        ds.normalization = None;
        assert!(matches!(
            fit_lstm(&ds, FeatureLayout::SocialOnly, &LstmConfig::default()),
            Err(MlError::NotNormalized(_))
        ));
    }
}
