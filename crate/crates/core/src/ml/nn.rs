//! Pieces shared by the two neural models: parameter init, mini-batch
//! gradient descent with norm clipping, and gradient-check helpers.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::MlError;

pub(crate) const CLIP_NORM: f64 = 5.0;

pub(crate) fn uniform_fill(rng: &mut ChaCha8Rng, out: &mut [f64], fan_in: usize) {
    let s = 1.0 / (fan_in.max(1) as f64).sqrt();
    for v in out {
        *v = rng.random_range(-s..s);
    }
}

pub(crate) struct SgdSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl SgdSettings {
    pub fn validate(&self) -> Result<(), MlError> {
        if self.batch_size == 0 {
            return Err(MlError::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(MlError::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Mean squared error and its gradient over `batch`. Per-sample terms are
/// computed in parallel and summed in batch order.
pub(crate) fn batch_loss_and_grad<F>(params: &[f64], batch: &[usize], per_sample: &F) -> (f64, Vec<f64>)
where
    F: Fn(&[f64], usize, &mut [f64]) -> f64 + Sync,
{
    let parts: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|&i| {
            let mut g = vec![0.0; params.len()];
            let sq = per_sample(params, i, &mut g);
            (sq, g)
        })
        .collect();
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    for (sq, g) in parts {
        loss += sq;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    grad.iter_mut().for_each(|v| *v *= scale);
    (loss * scale, grad)
}

/// Plain gradient descent on shuffled mini-batches. `per_sample` adds the
/// gradient of one squared error into its buffer and returns that error.
pub(crate) fn train_sgd<F>(params: &mut [f64], n_samples: usize, settings: &SgdSettings, rng: &mut ChaCha8Rng, per_sample: F)
where
    F: Fn(&[f64], usize, &mut [f64]) -> f64 + Sync,
{
    let mut order: Vec<usize> = (0..n_samples).collect();
    for _ in 0..settings.epochs {
        order.shuffle(rng);
        for batch in order.chunks(settings.batch_size) {
            let (_, mut grad) = batch_loss_and_grad(params, batch, &per_sample);
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > CLIP_NORM {
                let s = CLIP_NORM / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= settings.learning_rate * g;
            }
        }
    }
}

pub(crate) fn training_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Largest `|a - b| / max(|a|, |b|, floor)` over paired entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
pub(crate) fn central_differences(params: &[f64], step: f64, loss: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + step;
            let up = loss(&p);
            p[i] = orig - step;
            let down = loss(&p);
            p[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error() {
        assert_eq!(max_relative_error(&[1.0, 2.0], &[1.0, 2.0], 1e-8), 0.0);
        assert!((max_relative_error(&[1.0, 0.0], &[1.1, 0.0], 1e-8) - 0.1 / 1.1).abs() < 1e-12);
    }

    #[test]
    fn sgd_fits_a_line_with_clipping() {
        // y = 3x; per-sample gradient of (w x - y)^2.
        let xs: Vec<f64> = (0..50).map(|i| i as f64 / 50.0).collect();
        let mut w = vec![0.0];
        let settings = SgdSettings {
            epochs: 200,
            batch_size: 8,
            learning_rate: 0.5,
        };
        let mut rng = training_rng(0);
        train_sgd(&mut w, xs.len(), &settings, &mut rng, |p, i, g| {
            let e = p[0] * xs[i] - 3.0 * xs[i];
            g[0] += 2.0 * e * xs[i];
            e * e
        });
        assert!((w[0] - 3.0).abs() < 1e-6, "{w:?}");
    }
}
